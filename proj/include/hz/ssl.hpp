#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hz/augment.hpp"
#include "hz/encoder.hpp"
#include "hz/optim.hpp"
#include "hz/zoo.hpp"

namespace hz {

// Training objectives for the weight autoencoder.
//   ED    reconstruction only
//   Ec    contrastive only (NT-Xent over two augmented views)
//   EcD   beta * reconstruction + (1 - beta) * NT-Xent
//   EcplusD  like EcD but the contrastive term keeps only the positive pair
enum class SSLMode { ED, Ec, EcD, EcplusD };

SSLMode ssl_mode_from_string(const std::string& s);
const char* ssl_mode_name(SSLMode m);

struct SSLConfig {
    SSLMode mode = SSLMode::ED;
    double beta = 0.5;
    double temperature = 0.1;
    int batch_size = 500;
    int epochs = 2500;
    double lr = 1e-4;
    double weight_decay = 1e-9;
    int patience = 0;  // 0 = run all epochs; else stop after this many epochs without
                       // a new validation best
    uint64_t seed = 1;
    AugmentConfig augment;

    void validate() const;
};

// NT-Xent over 2*m rows of unit-norm embeddings where rows (2i, 2i+1) are
// the two views of sample i. For each row: -log softmax of its partner's
// similarity against all other rows (self excluded), averaged. Needs m >= 2
// for negatives to exist.
template <class S>
TensorT<S> ntxent_loss(const TensorT<S>& z, double temperature) {
    if (z.rank() != 2 || z.dim(0) % 2 != 0)
        throw BatchError("ntxent: expected [2*m, d] paired rows");
    const int rows = z.dim(0);
    if (rows < 4) throw BatchError("ntxent: need at least 2 sample pairs");
    if (temperature <= 0.0) throw ConfigError("ntxent: temperature must be positive");
    auto sim = scale(matmul_nt(z, z), 1.0 / temperature);
    std::vector<int> partner(static_cast<size_t>(rows), 0);
    for (int i = 0; i < rows; i += 2) {
        partner[size_t(i)] = i + 1;
        partner[size_t(i) + 1] = i;
    }
    auto lse = masked_row_logsumexp(sim);
    auto pos = gather_per_row(sim, partner);
    return mean_all(sub(lse, pos));
}

// Mean over pairs of (- cosine similarity) + log T. Rows of a and b must be
// unit-norm views of the same samples.
template <class S>
TensorT<S> positive_contrast_loss(const TensorT<S>& a, const TensorT<S>& b, double temperature) {
    if (temperature <= 0.0) throw ConfigError("contrast: temperature must be positive");
    auto sims = rowwise_dot(a, b);
    return add_const(scale(mean_all(sims), -1.0), std::log(temperature));
}

struct SSLEpoch {
    int epoch = 0;  // 1-based
    double total_loss = 0.0;
    double mse_part = 0.0;
    double contrast_part = 0.0;
    double val_r2 = 0.0;
    double val_loss = 0.0;  // Ec selection criterion; 0 for ED
};

struct SSLResult {
    HyperRepModel model;  // best-on-validation parameters
    std::vector<SSLEpoch> history;
    int best_epoch = 0;
    double best_val_r2 = 0.0;
};

// Adam training of the autoencoder on `train`, validation tracking on
// `val`. Keeps the parameters from the best validation epoch: highest
// reconstruction R^2 for modes with a decoder term, lowest validation loss
// for Ec. Deterministic per cfg.seed. Throws on non-finite training loss.
SSLResult train_hyperrep(const std::vector<ZooSample>& train, const std::vector<ZooSample>& val,
                         const LayerLayout& layout, const EncoderConfig& enc_cfg,
                         const SSLConfig& cfg,
                         const std::function<void(const SSLEpoch&)>& per_epoch = nullptr);

// Pooled reconstruction R^2 over a split: 1 - sum ||w - dec(enc(w))||^2 /
// sum ||w - mean||^2, mean taken elementwise over the split itself.
double reconstruction_r2(const HyperRepModel& model, const std::vector<ZooSample>& samples);

// Eval-mode latent codes for every sample, in input order.
std::vector<HyperRep> encode_samples(const HyperRepModel& model,
                                     const std::vector<ZooSample>& samples,
                                     int batch_size = 256);

}  // namespace hz
