#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hz/encoder.hpp"
#include "hz/ssl.hpp"
#include "hz/zoo.hpp"

namespace hz {

// Row-major double matrix for probe features.
struct FeatureMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    FeatureMatrix() = default;
    FeatureMatrix(int r, int c) : rows(r), cols(c), a(size_t(r) * size_t(c), 0.0) {}
    double& at(int r, int c) { return a[size_t(r) * cols + c]; }
    double at(int r, int c) const { return a[size_t(r) * cols + c]; }
    const double* row(int r) const { return a.data() + size_t(r) * cols; }
};

// 13 points, uniform in log10 over [1e-5, 1e3].
std::vector<double> default_alpha_grid();

struct RidgeModel {
    std::vector<double> coef;
    double intercept = 0.0;
    double alpha = 0.0;
};

// Closed-form ridge with an unpenalized intercept; alpha picked from the
// grid by validation R^2 (first best wins, grid in ascending order).
RidgeModel ridge_fit(const FeatureMatrix& z_train, const std::vector<double>& t_train,
                     const FeatureMatrix& z_val, const std::vector<double>& t_val,
                     const std::vector<double>& alpha_grid = default_alpha_grid());

// Single-alpha fit, no selection.
RidgeModel ridge_fit_alpha(const FeatureMatrix& z, const std::vector<double>& t, double alpha);

std::vector<double> ridge_predict(const RidgeModel& m, const FeatureMatrix& z);

// 1 - SSE/SST. Zero target variance -> NaN.
double r2_score(const std::vector<double>& pred, const std::vector<double>& truth);

// Tie-corrected rank correlation (tau-b). All-tied input on either side -> NaN.
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

double accuracy_score(const std::vector<int>& pred, const std::vector<int>& truth);

struct SoftmaxProbe {
    int classes = 0;
    int dim = 0;
    std::vector<float> w;  // [classes, dim]
    std::vector<float> b;  // [classes]
};

// Affine layer + cross entropy, adam (lr 1e-4, weight decay 1e-6),
// minibatches of 32, at most 200 epochs, early stop on validation accuracy
// with patience 20 (best-on-validation weights kept).
SoftmaxProbe softmax_probe_fit(const FeatureMatrix& z_train, const std::vector<int>& y_train,
                               const FeatureMatrix& z_val, const std::vector<int>& y_val,
                               int classes, uint64_t seed);

std::vector<int> softmax_predict(const SoftmaxProbe& p, const FeatureMatrix& z);

// Cyclic Jacobi eigensolver for symmetric matrices. `a` is n*n row-major
// and is destroyed. Outputs are sorted by descending eigenvalue; `vecs`
// holds eigenvectors as columns (vecs[i*n+j] = component i of eigenvector j).
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& vals,
                  std::vector<double>& vecs);

enum class PcaKind { linear, cosine, rbf };

struct PcaModel {
    PcaKind kind = PcaKind::linear;
    int dim = 0;
    double gamma = 0.0;            // rbf only
    std::vector<double> mean;      // linear: feature means
    std::vector<double> comps;     // linear: [dim, d] row-major components
    FeatureMatrix train_x;         // kernel: (possibly subsampled) fit rows
    std::vector<double> coef;      // kernel: [m, dim] projection coefficients
    std::vector<double> k_row_mean;  // kernel centering stats
    double k_mean = 0.0;
};

// Linear kind centers and takes top-dim covariance eigenvectors (via the
// Gram matrix when rows < cols); kernel kinds double-center the train Gram
// matrix and project out-of-sample points through kernel evaluations
// against the stored train rows (at most `train_cap` of them, subsampled
// with `seed`). gamma <= 0 defaults to 1/cols.
PcaModel fit_pca(const FeatureMatrix& x, PcaKind kind, int dim, double gamma = 0.0,
                 int train_cap = 1000, uint64_t seed = 1);

FeatureMatrix pca_transform(const PcaModel& m, const FeatureMatrix& x);

// ------------------------------------------------------------ probe suite

enum class SourceKind { raw_w, sw, pca_linear, pca_cosine, pca_rbf, hyperrep };

SourceKind source_from_string(const std::string& s);
const char* source_name(SourceKind k);

// Task names: eph, acc, ggap, lr, l2, drop, tf, f1_<k> (regression);
// act, init, opt (classification).
struct TaskSpec {
    std::string name;
    bool classification = false;
};

TaskSpec task_from_string(const std::string& name);

struct ProbeOptions {
    int pca_dim = 0;        // 0 = match the encoder latent width
    double rbf_gamma = 0.0;  // 0 = 1/d
    int kernel_train_cap = 1000;
    uint64_t seed = 1;
    bool standardize = true;  // z-score raw/stat features on train statistics
};

struct ProbeCell {
    std::string source;
    std::string task;
    std::string metric;  // "r2" or "acc"
    double value = 0.0;
    double tau = std::numeric_limits<double>::quiet_NaN();  // regression tasks only
    double alpha = std::numeric_limits<double>::quiet_NaN();
    int n_train = 0;
    int n_val = 0;
    int n_test = 0;
};

// One row per (source, task): fit on train with selection on val, score on
// test. `encoder` may be null when no hyperrep source is requested.
std::vector<ProbeCell> run_probe_suite(const ZooManifest& m, const std::string& zoo_dir,
                                       const std::vector<SourceKind>& sources,
                                       const std::vector<std::string>& tasks,
                                       const HyperRepModel* encoder, const ProbeOptions& opt);

struct OodCell {
    std::string task;
    double tau = 0.0;
    double r2 = 0.0;
    int n = 0;
};

// Fits ridge probes over source-zoo hyper-representations, then scores them
// on the target zoo's test split encoded with the same encoder. Regression
// tasks only. Calling it with target == source gives the in-distribution
// numbers through the identical code path.
std::vector<OodCell> ood_transfer(const HyperRepModel& encoder, const ZooManifest& src,
                                  const std::string& src_dir, const ZooManifest& tgt,
                                  const std::string& tgt_dir,
                                  const std::vector<std::string>& tasks);

}  // namespace hz
