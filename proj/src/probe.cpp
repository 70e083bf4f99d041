#include "hz/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace hz {

std::vector<double> default_alpha_grid() {
    std::vector<double> grid(13);
    for (int i = 0; i < 13; ++i) grid[size_t(i)] = std::pow(10.0, -5.0 + double(i) * 8.0 / 12.0);
    return grid;
}

namespace {

// Gaussian elimination with partial pivoting; a is n*n row-major, both a
// and b are destroyed. Solution lands in b.
void solve_inplace(std::vector<double>& a, std::vector<double>& b, int n) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(a[size_t(r) * n + col]) > std::fabs(a[size_t(piv) * n + col])) piv = r;
        if (a[size_t(piv) * n + col] == 0.0)
            throw DataError("ridge: singular normal equations");
        if (piv != col) {
            for (int c = col; c < n; ++c)
                std::swap(a[size_t(piv) * n + c], a[size_t(col) * n + c]);
            std::swap(b[size_t(piv)], b[size_t(col)]);
        }
        const double inv = 1.0 / a[size_t(col) * n + col];
        for (int r = col + 1; r < n; ++r) {
            const double f = a[size_t(r) * n + col] * inv;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[size_t(r) * n + c] -= f * a[size_t(col) * n + c];
            b[size_t(r)] -= f * b[size_t(col)];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[size_t(r)];
        for (int c = r + 1; c < n; ++c) acc -= a[size_t(r) * n + c] * b[size_t(c)];
        b[size_t(r)] = acc / a[size_t(r) * n + r];
    }
}

}  // namespace

RidgeModel ridge_fit_alpha(const FeatureMatrix& z, const std::vector<double>& t, double alpha) {
    if (z.rows != int(t.size())) throw LengthError("ridge: feature/target row mismatch");
    if (z.rows < 1) throw DataError("ridge: empty train split");
    if (alpha <= 0.0) throw ConfigError("ridge: alpha must be positive");
    const int d = z.cols;
    const int n = d + 1;  // intercept column appended, unpenalized
    std::vector<double> m(size_t(n) * n, 0.0);
    std::vector<double> rhs(size_t(n), 0.0);
    for (int r = 0; r < z.rows; ++r) {
        const double* row = z.row(r);
        for (int i = 0; i < d; ++i) {
            const double xi = row[i];
            if (xi == 0.0) continue;
            for (int j = i; j < d; ++j) m[size_t(i) * n + j] += xi * row[j];
            m[size_t(i) * n + d] += xi;
            rhs[size_t(i)] += xi * t[size_t(r)];
        }
        rhs[size_t(d)] += t[size_t(r)];
    }
    m[size_t(d) * n + d] = double(z.rows);
    for (int i = 0; i < d; ++i) {
        m[size_t(i) * n + i] += alpha;
        for (int j = i + 1; j < d; ++j) m[size_t(j) * n + i] = m[size_t(i) * n + j];
        m[size_t(d) * n + i] = m[size_t(i) * n + d];
    }
    solve_inplace(m, rhs, n);
    RidgeModel out;
    out.coef.assign(rhs.begin(), rhs.begin() + d);
    out.intercept = rhs[size_t(d)];
    out.alpha = alpha;
    return out;
}

std::vector<double> ridge_predict(const RidgeModel& m, const FeatureMatrix& z) {
    if (z.cols != int(m.coef.size())) throw LengthError("ridge: feature width mismatch");
    std::vector<double> out(size_t(z.rows), m.intercept);
    for (int r = 0; r < z.rows; ++r) {
        const double* row = z.row(r);
        double acc = 0.0;
        for (int i = 0; i < z.cols; ++i) acc += row[i] * m.coef[size_t(i)];
        out[size_t(r)] += acc;
    }
    return out;
}

RidgeModel ridge_fit(const FeatureMatrix& z_train, const std::vector<double>& t_train,
                     const FeatureMatrix& z_val, const std::vector<double>& t_val,
                     const std::vector<double>& alpha_grid) {
    if (alpha_grid.empty()) throw ConfigError("ridge: empty alpha grid");
    if (z_val.rows < 1) throw DataError("ridge: empty validation split");
    if (z_val.rows != int(t_val.size())) throw LengthError("ridge: val feature/target mismatch");
    RidgeModel best;
    double best_r2 = -std::numeric_limits<double>::infinity();
    for (double alpha : alpha_grid) {
        RidgeModel m = ridge_fit_alpha(z_train, t_train, alpha);
        const double r2 = r2_score(ridge_predict(m, z_val), t_val);
        if (std::isfinite(r2) && r2 > best_r2) {
            best_r2 = r2;
            best = std::move(m);
        }
    }
    if (best.coef.empty() && z_train.cols > 0)
        best = ridge_fit_alpha(z_train, t_train, alpha_grid.front());
    return best;
}

double r2_score(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size()) throw LengthError("r2: length mismatch");
    if (truth.size() < 2) throw LengthError("r2: need at least 2 values");
    double mean = 0.0;
    for (double t : truth) mean += t;
    mean /= double(truth.size());
    double sse = 0.0, sst = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        sse += (pred[i] - truth[i]) * (pred[i] - truth[i]);
        sst += (truth[i] - mean) * (truth[i] - mean);
    }
    if (sst == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return 1.0 - sse / sst;
}

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw LengthError("kendall: length mismatch");
    const size_t n = a.size();
    if (n < 2) throw LengthError("kendall: need at least 2 values");
    long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            const double da = a[i] - a[j];
            const double db = b[i] - b[j];
            if (da == 0.0) ++ties_a;
            if (db == 0.0) ++ties_b;
            if (da == 0.0 || db == 0.0) continue;
            if ((da > 0.0) == (db > 0.0)) ++concordant;
            else ++discordant;
        }
    const long long n0 = (long long)(n) * (long long)(n - 1) / 2;
    const double den = std::sqrt(double(n0 - ties_a)) * std::sqrt(double(n0 - ties_b));
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return double(concordant - discordant) / den;
}

double accuracy_score(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) throw LengthError("accuracy: length mismatch");
    if (pred.empty()) throw LengthError("accuracy: empty input");
    size_t hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
    return double(hits) / double(pred.size());
}

namespace {

Tensor feature_tensor(const FeatureMatrix& z) {
    Tensor t = Tensor::zeros({z.rows, z.cols});
    float* p = t.data();
    for (size_t i = 0; i < z.a.size(); ++i) p[i] = float(z.a[i]);
    return t;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    std::vector<int> out(size_t(logits.dim(0)));
    const float* p = logits.data();
    const int c = logits.dim(1);
    for (int r = 0; r < logits.dim(0); ++r) {
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (p[size_t(r) * c + j] > p[size_t(r) * c + best]) best = j;
        out[size_t(r)] = best;
    }
    return out;
}

}  // namespace

SoftmaxProbe softmax_probe_fit(const FeatureMatrix& z_train, const std::vector<int>& y_train,
                               const FeatureMatrix& z_val, const std::vector<int>& y_val,
                               int classes, uint64_t seed) {
    if (z_train.rows < 1) throw DataError("softmax probe: empty train split");
    if (z_train.rows != int(y_train.size()) || z_val.rows != int(y_val.size()))
        throw LengthError("softmax probe: feature/label mismatch");
    if (classes < 2) throw DataError("softmax probe: need at least 2 classes");
    std::set<int> seen(y_train.begin(), y_train.end());
    if (int(seen.size()) < 2) throw DataError("softmax probe: single-class train split");
    for (int y : y_train)
        if (y < 0 || y >= classes) throw IndexError("softmax probe: label out of range");

    const int d = z_train.cols;
    Tensor w = Tensor::zeros({classes, d});
    Tensor b = Tensor::zeros({classes});
    RngStream init = RngStream::root(seed).derive("softmax_probe");
    for (size_t i = 0; i < w.numel(); ++i) w.data()[i] = float(init.normal(0.0, 0.01));
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    std::vector<Tensor> params{w, b};
    OptimizerState state;
    OptimConfig cfg;
    cfg.kind = OptimKind::adam;
    cfg.lr = 1e-4;
    cfg.weight_decay = 1e-6;

    Tensor xtr = feature_tensor(z_train);
    Tensor xva = z_val.rows > 0 ? feature_tensor(z_val) : Tensor();
    const int kBatch = 32;
    const int kMaxEpochs = 200;
    const int kPatience = 20;

    std::vector<size_t> order(size_t(z_train.rows));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream shuffle_root = RngStream::root(seed).derive("softmax_order");

    double best_acc = -1.0;
    std::vector<float> best_w = w.values(), best_b = b.values();
    int stall = 0;
    for (int epoch = 1; epoch <= kMaxEpochs; ++epoch) {
        RngStream sh = shuffle_root.derive(uint64_t(epoch));
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[sh.below(i)]);
        for (size_t start = 0; start < order.size(); start += kBatch) {
            const size_t m = std::min(size_t(kBatch), order.size() - start);
            Tensor xb = Tensor::zeros({int(m), d});
            std::vector<int> yb(m);
            for (size_t k = 0; k < m; ++k) {
                const size_t idx = order[start + k];
                std::copy(xtr.data() + idx * size_t(d), xtr.data() + (idx + 1) * size_t(d),
                          xb.data() + k * size_t(d));
                yb[k] = y_train[idx];
            }
            auto loss = softmax_cross_entropy(linear(xb, w, b), yb);
            w.zero_grad();
            b.zero_grad();
            loss.backward();
            optimizer_step(params, state, cfg);
        }
        double acc;
        {
            NoGradGuard off;
            if (z_val.rows > 0)
                acc = accuracy_score(argmax_rows(linear(xva, w, b)), y_val);
            else
                acc = accuracy_score(argmax_rows(linear(xtr, w, b)), y_train);
        }
        if (acc > best_acc) {
            best_acc = acc;
            best_w = w.values();
            best_b = b.values();
            stall = 0;
        } else if (++stall >= kPatience) {
            break;
        }
    }

    SoftmaxProbe probe;
    probe.classes = classes;
    probe.dim = d;
    probe.w = std::move(best_w);
    probe.b = std::move(best_b);
    return probe;
}

std::vector<int> softmax_predict(const SoftmaxProbe& p, const FeatureMatrix& z) {
    if (z.cols != p.dim) throw LengthError("softmax probe: feature width mismatch");
    std::vector<int> out(size_t(z.rows));
    for (int r = 0; r < z.rows; ++r) {
        const double* row = z.row(r);
        int best = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < p.classes; ++c) {
            double acc = p.b[size_t(c)];
            for (int i = 0; i < p.dim; ++i) acc += row[i] * double(p.w[size_t(c) * p.dim + i]);
            if (acc > best_v) {
                best_v = acc;
                best = c;
            }
        }
        out[size_t(r)] = best;
    }
    return out;
}

void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& vals,
                  std::vector<double>& vecs) {
    if (n < 1 || a.size() != size_t(n) * size_t(n))
        throw DimensionError("jacobi: bad matrix size");
    vecs.assign(size_t(n) * size_t(n), 0.0);
    for (int i = 0; i < n; ++i) vecs[size_t(i) * n + i] = 1.0;
    double frob = 0.0;
    for (double v : a) frob += v * v;
    frob = std::sqrt(frob);
    const double stop = std::max(1e-300, 1e-13 * frob);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[size_t(p) * n + q] * a[size_t(p) * n + q];
        if (std::sqrt(2.0 * off) < stop) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[size_t(p) * n + q];
                if (std::fabs(apq) < stop / double(n)) continue;
                const double theta = (a[size_t(q) * n + q] - a[size_t(p) * n + p]) / (2.0 * apq);
                double t;
                if (theta >= 0.0)
                    t = 1.0 / (theta + std::sqrt(theta * theta + 1.0));
                else
                    t = -1.0 / (-theta + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[size_t(k) * n + p];
                    const double akq = a[size_t(k) * n + q];
                    a[size_t(k) * n + p] = c * akp - s * akq;
                    a[size_t(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[size_t(p) * n + k];
                    const double aqk = a[size_t(q) * n + k];
                    a[size_t(p) * n + k] = c * apk - s * aqk;
                    a[size_t(q) * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = vecs[size_t(k) * n + p];
                    const double vkq = vecs[size_t(k) * n + q];
                    vecs[size_t(k) * n + p] = c * vkp - s * vkq;
                    vecs[size_t(k) * n + q] = s * vkp + c * vkq;
                }
            }
    }
    vals.resize(size_t(n));
    std::vector<int> idx(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        vals[size_t(i)] = a[size_t(i) * n + i];
        idx[size_t(i)] = i;
    }
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int x, int y) { return vals[size_t(x)] > vals[size_t(y)]; });
    std::vector<double> sorted_vals(static_cast<size_t>(n), 0.0);
    std::vector<double> sorted_vecs(size_t(n) * size_t(n));
    for (int j = 0; j < n; ++j) {
        sorted_vals[size_t(j)] = vals[size_t(idx[size_t(j)])];
        for (int i = 0; i < n; ++i)
            sorted_vecs[size_t(i) * n + j] = vecs[size_t(i) * n + size_t(idx[size_t(j)])];
    }
    vals = std::move(sorted_vals);
    vecs = std::move(sorted_vecs);
}

namespace {

double dot_rows(const double* x, const double* y, int d) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += x[i] * y[i];
    return acc;
}

double kernel_eval(const PcaModel& m, const double* x, const double* y, int d) {
    if (m.kind == PcaKind::cosine) {
        const double nx = std::sqrt(dot_rows(x, x, d));
        const double ny = std::sqrt(dot_rows(y, y, d));
        if (nx == 0.0 || ny == 0.0) return 0.0;
        return dot_rows(x, y, d) / (nx * ny);
    }
    double dist = 0.0;
    for (int i = 0; i < d; ++i) dist += (x[i] - y[i]) * (x[i] - y[i]);
    return std::exp(-m.gamma * dist);
}

}  // namespace

PcaModel fit_pca(const FeatureMatrix& x, PcaKind kind, int dim, double gamma, int train_cap,
                 uint64_t seed) {
    if (x.rows < 2) throw DataError("pca: need at least 2 rows");
    if (dim < 1) throw ConfigError("pca: dim must be >= 1");
    PcaModel m;
    m.kind = kind;
    m.dim = dim;
    const int d = x.cols;

    if (kind == PcaKind::linear) {
        if (dim > std::min(x.rows, d))
            throw ConfigError("pca: dim exceeds feature/sample bound");
        m.mean.assign(size_t(d), 0.0);
        for (int r = 0; r < x.rows; ++r)
            for (int c = 0; c < d; ++c) m.mean[size_t(c)] += x.at(r, c);
        for (double& v : m.mean) v /= double(x.rows);
        std::vector<double> xc(size_t(x.rows) * size_t(d));
        for (int r = 0; r < x.rows; ++r)
            for (int c = 0; c < d; ++c)
                xc[size_t(r) * d + c] = x.at(r, c) - m.mean[size_t(c)];
        m.comps.assign(size_t(dim) * size_t(d), 0.0);
        if (d <= x.rows) {
            std::vector<double> cov(size_t(d) * size_t(d), 0.0);
            for (int r = 0; r < x.rows; ++r)
                for (int i = 0; i < d; ++i) {
                    const double xi = xc[size_t(r) * d + i];
                    if (xi == 0.0) continue;
                    for (int j = i; j < d; ++j) cov[size_t(i) * d + j] += xi * xc[size_t(r) * d + j];
                }
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < i; ++j) cov[size_t(i) * d + j] = cov[size_t(j) * d + i];
            std::vector<double> vals, vecs;
            jacobi_eigen(cov, d, vals, vecs);
            for (int k = 0; k < dim; ++k)
                for (int i = 0; i < d; ++i)
                    m.comps[size_t(k) * d + i] = vecs[size_t(i) * d + k];
        } else {
            // Fewer rows than features: eigendecompose the Gram matrix and
            // map its eigenvectors back through the data.
            const int n = x.rows;
            std::vector<double> gram(size_t(n) * size_t(n), 0.0);
            for (int r = 0; r < n; ++r)
                for (int s = r; s < n; ++s) {
                    const double g = dot_rows(xc.data() + size_t(r) * d,
                                              xc.data() + size_t(s) * d, d);
                    gram[size_t(r) * n + s] = g;
                    gram[size_t(s) * n + r] = g;
                }
            std::vector<double> vals, vecs;
            jacobi_eigen(gram, n, vals, vecs);
            for (int k = 0; k < dim; ++k) {
                if (vals[size_t(k)] <= 1e-12 * std::max(1.0, vals[0])) continue;
                const double inv = 1.0 / std::sqrt(vals[size_t(k)]);
                for (int i = 0; i < d; ++i) {
                    double acc = 0.0;
                    for (int r = 0; r < n; ++r)
                        acc += xc[size_t(r) * d + i] * vecs[size_t(r) * n + k];
                    m.comps[size_t(k) * d + i] = acc * inv;
                }
            }
        }
        return m;
    }

    // kernel kinds
    m.gamma = gamma > 0.0 ? gamma : 1.0 / double(d);
    std::vector<int> rows(size_t(x.rows));
    for (int i = 0; i < x.rows; ++i) rows[size_t(i)] = i;
    if (train_cap > 0 && x.rows > train_cap) {
        RngStream rng = RngStream::root(seed).derive("pca_subsample");
        for (size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
        rows.resize(size_t(train_cap));
        std::sort(rows.begin(), rows.end());
    }
    const int n = int(rows.size());
    if (dim > n) throw ConfigError("pca: dim exceeds sample count");
    m.train_x = FeatureMatrix(n, d);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) m.train_x.at(r, c) = x.at(rows[size_t(r)], c);

    std::vector<double> k(size_t(n) * size_t(n));
    for (int r = 0; r < n; ++r)
        for (int s = r; s < n; ++s) {
            const double v = kernel_eval(m, m.train_x.row(r), m.train_x.row(s), d);
            k[size_t(r) * n + s] = v;
            k[size_t(s) * n + r] = v;
        }
    m.k_row_mean.assign(size_t(n), 0.0);
    m.k_mean = 0.0;
    for (int r = 0; r < n; ++r) {
        for (int s = 0; s < n; ++s) m.k_row_mean[size_t(r)] += k[size_t(r) * n + s];
        m.k_row_mean[size_t(r)] /= double(n);
        m.k_mean += m.k_row_mean[size_t(r)];
    }
    m.k_mean /= double(n);
    std::vector<double> kc(size_t(n) * size_t(n));
    for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s)
            kc[size_t(r) * n + s] = k[size_t(r) * n + s] - m.k_row_mean[size_t(r)] -
                                    m.k_row_mean[size_t(s)] + m.k_mean;
    std::vector<double> vals, vecs;
    jacobi_eigen(kc, n, vals, vecs);
    m.coef.assign(size_t(n) * size_t(dim), 0.0);
    const double floor = 1e-12 * std::max(1.0, vals.empty() ? 0.0 : vals[0]);
    for (int j = 0; j < dim; ++j) {
        if (vals[size_t(j)] <= floor) continue;
        const double inv = 1.0 / std::sqrt(vals[size_t(j)]);
        for (int i = 0; i < n; ++i)
            m.coef[size_t(i) * dim + j] = vecs[size_t(i) * n + j] * inv;
    }
    return m;
}

FeatureMatrix pca_transform(const PcaModel& m, const FeatureMatrix& x) {
    FeatureMatrix out(x.rows, m.dim);
    if (m.kind == PcaKind::linear) {
        if (x.cols != int(m.mean.size())) throw LengthError("pca: feature width mismatch");
        const int d = x.cols;
        std::vector<double> xc(static_cast<size_t>(d), 0.0);
        for (int r = 0; r < x.rows; ++r) {
            for (int c = 0; c < d; ++c) xc[size_t(c)] = x.at(r, c) - m.mean[size_t(c)];
            for (int k = 0; k < m.dim; ++k)
                out.at(r, k) = dot_rows(xc.data(), m.comps.data() + size_t(k) * d, d);
        }
        return out;
    }
    if (x.cols != m.train_x.cols) throw LengthError("pca: feature width mismatch");
    const int n = m.train_x.rows;
    const int d = x.cols;
    std::vector<double> kv(static_cast<size_t>(n), 0.0);
    for (int r = 0; r < x.rows; ++r) {
        double kmean = 0.0;
        for (int i = 0; i < n; ++i) {
            kv[size_t(i)] = kernel_eval(m, x.row(r), m.train_x.row(i), d);
            kmean += kv[size_t(i)];
        }
        kmean /= double(n);
        for (int j = 0; j < m.dim; ++j) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                const double centered = kv[size_t(i)] - kmean - m.k_row_mean[size_t(i)] + m.k_mean;
                acc += centered * m.coef[size_t(i) * m.dim + j];
            }
            out.at(r, j) = acc;
        }
    }
    return out;
}

// ------------------------------------------------------------ probe suite

SourceKind source_from_string(const std::string& s) {
    if (s == "raw" || s == "raw_w") return SourceKind::raw_w;
    if (s == "sw" || s == "stats") return SourceKind::sw;
    if (s == "pca" || s == "pca_linear") return SourceKind::pca_linear;
    if (s == "pca_cosine") return SourceKind::pca_cosine;
    if (s == "pca_rbf") return SourceKind::pca_rbf;
    if (s == "hyperrep" || s == "latent") return SourceKind::hyperrep;
    throw ConfigError("unknown representation source: " + s);
}

const char* source_name(SourceKind k) {
    switch (k) {
        case SourceKind::raw_w: return "raw_w";
        case SourceKind::sw: return "sw";
        case SourceKind::pca_linear: return "pca_linear";
        case SourceKind::pca_cosine: return "pca_cosine";
        case SourceKind::pca_rbf: return "pca_rbf";
        case SourceKind::hyperrep: return "hyperrep";
    }
    return "?";
}

TaskSpec task_from_string(const std::string& name) {
    TaskSpec t;
    t.name = name;
    if (name == "act" || name == "init" || name == "opt") {
        t.classification = true;
        return t;
    }
    if (name == "eph" || name == "acc" || name == "ggap" || name == "lr" || name == "l2" ||
        name == "drop" || name == "tf" || name.rfind("f1_", 0) == 0)
        return t;
    throw ConfigError("unknown probe task: " + name);
}

namespace {

const ZooModelEntry& entry_for(const std::map<int, const ZooModelEntry*>& by_id, int model_id) {
    auto it = by_id.find(model_id);
    if (it == by_id.end())
        throw DataError("probe: checkpoint references unknown model " + std::to_string(model_id));
    return *it->second;
}

const EpochRecord& record_for(const ZooModelEntry& e, int epoch, int model_id) {
    for (const auto& r : e.epochs)
        if (r.epoch == epoch) return r;
    throw DataError("probe: model " + std::to_string(model_id) + " has no record for epoch " +
                    std::to_string(epoch));
}

std::vector<double> regression_targets(const std::map<int, const ZooModelEntry*>& by_id,
                                       const std::vector<ZooSample>& samples,
                                       const std::string& task) {
    std::vector<double> t;
    t.reserve(samples.size());
    for (const auto& s : samples) {
        const ZooModelEntry& e = entry_for(by_id, s.model_id);
        if (task == "eph") {
            t.push_back(double(s.epoch));
        } else if (task == "acc") {
            t.push_back(record_for(e, s.epoch, s.model_id).test_acc);
        } else if (task == "ggap") {
            t.push_back(record_for(e, s.epoch, s.model_id).generalization_gap);
        } else if (task == "lr") {
            t.push_back(e.config.lr);
        } else if (task == "l2") {
            t.push_back(e.config.l2_reg);
        } else if (task == "drop") {
            t.push_back(e.config.dropout);
        } else if (task == "tf") {
            t.push_back(e.config.train_fraction);
        } else if (task.rfind("f1_", 0) == 0) {
            const int cls = std::stoi(task.substr(3));
            const auto& f1 = record_for(e, s.epoch, s.model_id).per_class_f1;
            if (cls < 0 || size_t(cls) >= f1.size())
                throw DataError("probe: class " + std::to_string(cls) +
                                " out of range for task " + task);
            t.push_back(f1[size_t(cls)]);
        } else {
            throw ConfigError("probe: not a regression task: " + task);
        }
    }
    return t;
}

std::string class_value(const ZooModelEntry& e, const std::string& task) {
    if (task == "act") return act_name(e.config.activation);
    if (task == "init") return init_name(e.config.init);
    if (task == "opt") return optim_name(e.config.optimizer);
    throw ConfigError("probe: not a classification task: " + task);
}

FeatureMatrix raw_features(const std::vector<ZooSample>& samples, size_t n) {
    FeatureMatrix f(int(samples.size()), int(n));
    for (size_t r = 0; r < samples.size(); ++r) {
        if (samples[r].weights.data.size() != n)
            throw LengthError("probe: checkpoint size does not match layout");
        for (size_t c = 0; c < n; ++c) f.a[r * n + c] = double(samples[r].weights.data[c]);
    }
    return f;
}

FeatureMatrix stat_features(const std::vector<ZooSample>& samples, const LayerLayout& layout) {
    FeatureMatrix f;
    for (size_t r = 0; r < samples.size(); ++r) {
        std::vector<double> s = weight_statistics(samples[r].weights, layout);
        if (r == 0) f = FeatureMatrix(int(samples.size()), int(s.size()));
        std::copy(s.begin(), s.end(), f.a.begin() + r * s.size());
    }
    return f;
}

FeatureMatrix latent_features(const HyperRepModel& model, const std::vector<ZooSample>& samples) {
    std::vector<HyperRep> reps = encode_samples(model, samples);
    FeatureMatrix f(int(reps.size()), reps.empty() ? model.cfg.latent_dim : int(reps[0].z.size()));
    for (size_t r = 0; r < reps.size(); ++r)
        for (size_t c = 0; c < reps[r].z.size(); ++c) f.a[r * reps[r].z.size() + c] = reps[r].z[c];
    return f;
}

struct Standardizer {
    std::vector<double> mean, scale;

    void fit(const FeatureMatrix& x) {
        mean.assign(size_t(x.cols), 0.0);
        scale.assign(size_t(x.cols), 1.0);
        if (x.rows == 0) return;
        for (int r = 0; r < x.rows; ++r)
            for (int c = 0; c < x.cols; ++c) mean[size_t(c)] += x.at(r, c);
        for (double& v : mean) v /= double(x.rows);
        std::vector<double> var(size_t(x.cols), 0.0);
        for (int r = 0; r < x.rows; ++r)
            for (int c = 0; c < x.cols; ++c) {
                const double d = x.at(r, c) - mean[size_t(c)];
                var[size_t(c)] += d * d;
            }
        for (int c = 0; c < x.cols; ++c) {
            const double sd = std::sqrt(var[size_t(c)] / double(x.rows));
            scale[size_t(c)] = sd > 0.0 ? 1.0 / sd : 1.0;
        }
    }
    void apply(FeatureMatrix& x) const {
        for (int r = 0; r < x.rows; ++r)
            for (int c = 0; c < x.cols; ++c)
                x.at(r, c) = (x.at(r, c) - mean[size_t(c)]) * scale[size_t(c)];
    }
};

}  // namespace

std::vector<ProbeCell> run_probe_suite(const ZooManifest& m, const std::string& zoo_dir,
                                       const std::vector<SourceKind>& sources,
                                       const std::vector<std::string>& tasks,
                                       const HyperRepModel* encoder, const ProbeOptions& opt) {
    if (sources.empty() || tasks.empty())
        throw ConfigError("probe: need at least one source and one task");
    ArchSpec arch = arch_from_manifest(m);
    LayerLayout layout = derive_layout(arch);
    if (layout.hash != m.layout_hash)
        throw ConsistencyError("probe: manifest layout does not match its architecture");

    auto tr = load_split_checkpoints(m, zoo_dir, "train");
    auto va = load_split_checkpoints(m, zoo_dir, "val");
    auto te = load_split_checkpoints(m, zoo_dir, "test");
    if (tr.empty() || va.empty() || te.empty())
        throw DataError("probe: zoo needs non-empty train/val/test splits");

    std::map<int, const ZooModelEntry*> by_id;
    for (const auto& e : m.models) by_id[e.id] = &e;

    std::vector<ProbeCell> report;
    for (SourceKind src : sources) {
        FeatureMatrix ftr, fva, fte;
        const bool needs_raw = src == SourceKind::raw_w || src == SourceKind::pca_linear ||
                               src == SourceKind::pca_cosine || src == SourceKind::pca_rbf;
        if (needs_raw) {
            ftr = raw_features(tr, layout.total);
            fva = raw_features(va, layout.total);
            fte = raw_features(te, layout.total);
        } else if (src == SourceKind::sw) {
            ftr = stat_features(tr, layout);
            fva = stat_features(va, layout);
            fte = stat_features(te, layout);
        } else {
            if (!encoder) throw ConfigError("probe: hyperrep source needs a trained encoder");
            if (encoder->layout.hash != m.layout_hash)
                throw ConsistencyError("probe: encoder was trained for a different layout");
            ftr = latent_features(*encoder, tr);
            fva = latent_features(*encoder, va);
            fte = latent_features(*encoder, te);
        }
        if (opt.standardize && (needs_raw || src == SourceKind::sw)) {
            Standardizer st;
            st.fit(ftr);
            st.apply(ftr);
            st.apply(fva);
            st.apply(fte);
        }
        if (src == SourceKind::pca_linear || src == SourceKind::pca_cosine ||
            src == SourceKind::pca_rbf) {
            int dim = opt.pca_dim;
            if (dim <= 0) dim = encoder ? encoder->cfg.latent_dim : 50;
            dim = std::min({dim, ftr.rows, ftr.cols});
            const PcaKind kind = src == SourceKind::pca_linear
                                     ? PcaKind::linear
                                     : (src == SourceKind::pca_cosine ? PcaKind::cosine
                                                                      : PcaKind::rbf);
            PcaModel pca = fit_pca(ftr, kind, dim, opt.rbf_gamma, opt.kernel_train_cap, opt.seed);
            ftr = pca_transform(pca, ftr);
            fva = pca_transform(pca, fva);
            fte = pca_transform(pca, fte);
        }

        for (const std::string& task_name : tasks) {
            TaskSpec task = task_from_string(task_name);
            ProbeCell cell;
            cell.source = source_name(src);
            cell.task = task.name;
            cell.n_train = ftr.rows;
            cell.n_val = fva.rows;
            cell.n_test = fte.rows;
            if (!task.classification) {
                auto ttr = regression_targets(by_id, tr, task.name);
                auto tva = regression_targets(by_id, va, task.name);
                auto tte = regression_targets(by_id, te, task.name);
                RidgeModel probe = ridge_fit(ftr, ttr, fva, tva);
                auto pred = ridge_predict(probe, fte);
                cell.metric = "r2";
                cell.value = r2_score(pred, tte);
                cell.tau = kendall_tau(pred, tte);
                cell.alpha = probe.alpha;
            } else {
                std::vector<std::string> vtr, vva, vte;
                for (const auto& s : tr) vtr.push_back(class_value(entry_for(by_id, s.model_id), task.name));
                for (const auto& s : va) vva.push_back(class_value(entry_for(by_id, s.model_id), task.name));
                for (const auto& s : te) vte.push_back(class_value(entry_for(by_id, s.model_id), task.name));
                std::set<std::string> all(vtr.begin(), vtr.end());
                all.insert(vva.begin(), vva.end());
                all.insert(vte.begin(), vte.end());
                std::vector<std::string> labels(all.begin(), all.end());
                auto to_ids = [&](const std::vector<std::string>& vs) {
                    std::vector<int> out;
                    out.reserve(vs.size());
                    for (const auto& v : vs)
                        out.push_back(int(std::lower_bound(labels.begin(), labels.end(), v) -
                                          labels.begin()));
                    return out;
                };
                auto ytr = to_ids(vtr);
                auto yva = to_ids(vva);
                auto yte = to_ids(vte);
                std::set<int> train_classes(ytr.begin(), ytr.end());
                if (train_classes.size() < 2)
                    throw DataError("probe: task " + task.name +
                                    " has a single class in the train split");
                const uint64_t cell_seed =
                    opt.seed ^ fnv1a64(source_name(src) + std::string("/") + task.name);
                SoftmaxProbe probe = softmax_probe_fit(ftr, ytr, fva, yva, int(labels.size()),
                                                       cell_seed);
                cell.metric = "acc";
                cell.value = accuracy_score(softmax_predict(probe, fte), yte);
            }
            report.push_back(std::move(cell));
        }
    }
    return report;
}

std::vector<OodCell> ood_transfer(const HyperRepModel& encoder, const ZooManifest& src,
                                  const std::string& src_dir, const ZooManifest& tgt,
                                  const std::string& tgt_dir,
                                  const std::vector<std::string>& tasks) {
    if (src.layout_hash != tgt.layout_hash) {
        char a[19], b[19];
        std::snprintf(a, sizeof a, "0x%016llx", (unsigned long long)src.layout_hash);
        std::snprintf(b, sizeof b, "0x%016llx", (unsigned long long)tgt.layout_hash);
        throw LayoutError(std::string("ood: incompatible layouts: source ") + a + " vs target " +
                          b);
    }
    if (encoder.layout.hash != src.layout_hash)
        throw LayoutError("ood: encoder was trained for a different layout");

    auto tr = load_split_checkpoints(src, src_dir, "train");
    auto va = load_split_checkpoints(src, src_dir, "val");
    auto te = load_split_checkpoints(tgt, tgt_dir, "test");
    if (tr.empty() || va.empty() || te.empty())
        throw DataError("ood: empty split (source train/val or target test)");

    std::map<int, const ZooModelEntry*> src_by_id, tgt_by_id;
    for (const auto& e : src.models) src_by_id[e.id] = &e;
    for (const auto& e : tgt.models) tgt_by_id[e.id] = &e;

    FeatureMatrix ftr = latent_features(encoder, tr);
    FeatureMatrix fva = latent_features(encoder, va);
    FeatureMatrix fte = latent_features(encoder, te);

    std::vector<OodCell> out;
    for (const std::string& task_name : tasks) {
        TaskSpec task = task_from_string(task_name);
        if (task.classification)
            throw ConfigError("ood: rank transfer is defined for regression tasks, not " +
                              task.name);
        auto ttr = regression_targets(src_by_id, tr, task.name);
        auto tva = regression_targets(src_by_id, va, task.name);
        auto tte = regression_targets(tgt_by_id, te, task.name);
        RidgeModel probe = ridge_fit(ftr, ttr, fva, tva);
        auto pred = ridge_predict(probe, fte);
        OodCell cell;
        cell.task = task.name;
        cell.tau = kendall_tau(pred, tte);
        cell.r2 = r2_score(pred, tte);
        cell.n = int(te.size());
        out.push_back(cell);
    }
    return out;
}

}  // namespace hz
