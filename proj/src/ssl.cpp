#include "hz/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hz {

SSLMode ssl_mode_from_string(const std::string& s) {
    if (s == "ED") return SSLMode::ED;
    if (s == "Ec") return SSLMode::Ec;
    if (s == "EcD") return SSLMode::EcD;
    if (s == "Ec+D" || s == "EcplusD") return SSLMode::EcplusD;
    throw ConfigError("unknown training mode: " + s);
}

const char* ssl_mode_name(SSLMode m) {
    switch (m) {
        case SSLMode::ED: return "ED";
        case SSLMode::Ec: return "Ec";
        case SSLMode::EcD: return "EcD";
        case SSLMode::EcplusD: return "Ec+D";
    }
    return "?";
}

void SSLConfig::validate() const {
    if (beta < 0.0 || beta > 1.0) throw ConfigError("ssl: beta must be in [0, 1]");
    if ((mode == SSLMode::EcD || mode == SSLMode::EcplusD) && (beta <= 0.0 || beta >= 1.0))
        throw ConfigError("ssl: combined modes need 0 < beta < 1");
    if (temperature <= 0.0) throw ConfigError("ssl: temperature must be positive");
    if (batch_size < 1) throw ConfigError("ssl: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("ssl: epochs must be >= 1");
    if (lr <= 0.0) throw ConfigError("ssl: lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("ssl: weight_decay must be >= 0");
    if (patience < 0) throw ConfigError("ssl: patience must be >= 0");
    if (mode != SSLMode::ED && !augment.any_enabled())
        throw ConfigError("ssl: contrastive modes need at least one augmentation enabled");
    augment.validate();
}

namespace {

double mean_contrastive_val_loss(const HyperRepModel& model, const std::vector<ZooSample>& val,
                                 const LayerLayout& layout, const PermutationSet& set,
                                 const SSLConfig& cfg, RngStream epoch_stream) {
    NoGradGuard off;
    RngStream drop = RngStream::root(0);
    double sum = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < val.size(); start += size_t(cfg.batch_size)) {
        const size_t m = std::min(size_t(cfg.batch_size), val.size() - start);
        if (m < 2) continue;
        std::vector<View> va(m), vb(m);
        for (size_t k = 0; k < m; ++k) {
            RngStream vs = epoch_stream.derive(start + k);
            auto pair = make_views(val[start + k].weights, layout, set, cfg.augment, vs);
            va[k] = std::move(pair.first);
            vb[k] = std::move(pair.second);
        }
        const size_t n = layout.total;
        Tensor v = Tensor::zeros({int(2 * m), int(n)});
        for (size_t k = 0; k < m; ++k) {
            std::copy(va[k].input.data.begin(), va[k].input.data.end(),
                      v.data() + (2 * k) * n);
            std::copy(vb[k].input.data.begin(), vb[k].input.data.end(),
                      v.data() + (2 * k + 1) * n);
        }
        Tensor p = model.project(model.encode(v, false, drop));
        sum += ntxent_loss(p, cfg.temperature).item() * double(m);
        count += m;
    }
    if (count == 0) return std::numeric_limits<double>::quiet_NaN();
    return sum / double(count);
}

}  // namespace

SSLResult train_hyperrep(const std::vector<ZooSample>& train, const std::vector<ZooSample>& val,
                         const LayerLayout& layout, const EncoderConfig& enc_cfg,
                         const SSLConfig& cfg,
                         const std::function<void(const SSLEpoch&)>& per_epoch) {
    cfg.validate();
    if (train.empty()) throw DataError("ssl: empty train split");
    if (val.empty()) throw DataError("ssl: empty validation split");
    const bool contrastive = cfg.mode != SSLMode::ED;
    if (contrastive && train.size() < 2)
        throw DataError("ssl: contrastive modes need at least 2 train samples");
    for (const auto& s : train)
        if (s.weights.data.size() != layout.total)
            throw LengthError("ssl: train sample size does not match layout");

    SSLResult res;
    res.model = HyperRepModel(enc_cfg, layout);
    HyperRepModel& model = res.model;
    auto params = model.params.tensors();
    OptimizerState opt_state;
    OptimConfig opt_cfg;
    opt_cfg.kind = OptimKind::adam;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;

    PermutationSet perm_set = sample_permutation_set(layout, cfg.augment.permutation_count,
                                                     cfg.seed);
    RngStream root = RngStream::root(cfg.seed).derive("ssl");
    const size_t n = layout.total;
    const double beta = (cfg.mode == SSLMode::ED) ? 1.0 : (cfg.mode == SSLMode::Ec ? 0.0 : cfg.beta);

    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    double best_key = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<float>> best_snap = model.snapshot_values();
    int best_epoch = 0;
    int stall = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        RngStream shuffle = root.derive("order").derive(uint64_t(epoch));
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        RngStream views_root = root.derive("views").derive(uint64_t(epoch));
        RngStream drop_root = root.derive("drop").derive(uint64_t(epoch));

        double sum_total = 0.0, sum_mse = 0.0, sum_con = 0.0;
        size_t seen = 0;
        size_t batch_no = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size), ++batch_no) {
            const size_t m = std::min(size_t(cfg.batch_size), order.size() - start);
            if (contrastive && m < 2) continue;
            RngStream drop = drop_root.derive(batch_no);

            Tensor loss, mse_term, con_term;
            if (cfg.mode == SSLMode::ED) {
                Tensor x = Tensor::zeros({int(m), int(n)});
                Tensor y = Tensor::zeros({int(m), int(n)});
                for (size_t k = 0; k < m; ++k) {
                    const size_t idx = order[start + k];
                    const WeightVector& w = train[idx].weights;
                    if (cfg.augment.any_enabled()) {
                        RngStream vs = views_root.derive(idx);
                        View view = make_view(w, layout, perm_set, cfg.augment, vs);
                        std::copy(view.input.data.begin(), view.input.data.end(),
                                  x.data() + k * n);
                        std::copy(view.target.data.begin(), view.target.data.end(),
                                  y.data() + k * n);
                    } else {
                        std::copy(w.data.begin(), w.data.end(), x.data() + k * n);
                        std::copy(w.data.begin(), w.data.end(), y.data() + k * n);
                    }
                }
                auto z = model.encode(x, true, drop);
                auto vhat = model.decode(z, true, drop);
                loss = mse_loss(vhat, y);
                mse_term = loss;
            } else {
                Tensor v2 = Tensor::zeros({int(2 * m), int(n)});
                Tensor clean = Tensor::zeros({int(m), int(n)});
                for (size_t k = 0; k < m; ++k) {
                    const size_t idx = order[start + k];
                    const WeightVector& w = train[idx].weights;
                    RngStream vs = views_root.derive(idx);
                    auto pair = make_views(w, layout, perm_set, cfg.augment, vs);
                    std::copy(pair.first.input.data.begin(), pair.first.input.data.end(),
                              v2.data() + (2 * k) * n);
                    std::copy(pair.second.input.data.begin(), pair.second.input.data.end(),
                              v2.data() + (2 * k + 1) * n);
                    std::copy(w.data.begin(), w.data.end(), clean.data() + k * n);
                }
                auto zv = model.encode(v2, true, drop);
                auto proj = model.project(zv);
                if (cfg.mode == SSLMode::EcplusD || cfg.mode == SSLMode::Ec) {
                    if (cfg.mode == SSLMode::EcplusD) {
                        // Split the interleaved projections back into the two views.
                        std::vector<int> ia(m), ib(m);
                        for (size_t k = 0; k < m; ++k) {
                            ia[k] = int(2 * k);
                            ib[k] = int(2 * k + 1);
                        }
                        auto pa = take_rows(proj, ia);
                        auto pb = take_rows(proj, ib);
                        con_term = positive_contrast_loss(pa, pb, cfg.temperature);
                    } else {
                        con_term = ntxent_loss(proj, cfg.temperature);
                    }
                } else {
                    con_term = ntxent_loss(proj, cfg.temperature);
                }
                if (cfg.mode == SSLMode::Ec) {
                    loss = con_term;
                } else {
                    auto zc = model.encode(clean, true, drop);
                    auto vhat = model.decode(zc, true, drop);
                    mse_term = mse_loss(vhat, clean);
                    loss = add(scale(mse_term, beta), scale(con_term, 1.0 - beta));
                }
            }

            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw Error("ssl: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(batch_no) + " (mode " + ssl_mode_name(cfg.mode) + ")");
            sum_total += lv * double(m);
            if (mse_term.node()) sum_mse += mse_term.item() * double(m);
            if (con_term.node()) sum_con += con_term.item() * double(m);
            seen += m;

            for (auto& p : params) p.zero_grad();
            loss.backward();
            optimizer_step(params, opt_state, opt_cfg);
        }
        if (seen == 0) throw DataError("ssl: no trainable batches this epoch");

        SSLEpoch row;
        row.epoch = epoch;
        row.total_loss = sum_total / double(seen);
        row.mse_part = sum_mse / double(seen);
        row.contrast_part = sum_con / double(seen);
        row.val_r2 = reconstruction_r2(model, val);
        double key;
        if (cfg.mode == SSLMode::Ec) {
            row.val_loss = mean_contrastive_val_loss(model, val, layout, perm_set, cfg,
                                                     root.derive("val_views").derive(uint64_t(epoch)));
            key = -row.val_loss;
        } else {
            key = row.val_r2;
        }
        res.history.push_back(row);
        if (per_epoch) per_epoch(row);

        if (key > best_key) {
            best_key = key;
            best_snap = model.snapshot_values();
            best_epoch = epoch;
            stall = 0;
        } else if (++stall >= cfg.patience && cfg.patience > 0) {
            break;
        }
    }

    model.restore_values(best_snap);
    res.best_epoch = best_epoch;
    res.best_val_r2 = best_epoch > 0 ? res.history[size_t(best_epoch) - 1].val_r2
                                     : reconstruction_r2(model, val);
    return res;
}

double reconstruction_r2(const HyperRepModel& model, const std::vector<ZooSample>& samples) {
    if (samples.empty()) throw DataError("reconstruction_r2: empty split");
    const size_t n = model.layout.total;
    std::vector<double> mean(n, 0.0);
    for (const auto& s : samples) {
        if (s.weights.data.size() != n)
            throw LengthError("reconstruction_r2: sample size does not match layout");
        for (size_t j = 0; j < n; ++j) mean[j] += s.weights.data[j];
    }
    for (double& v : mean) v /= double(samples.size());

    NoGradGuard off;
    double sse = 0.0, sst = 0.0;
    const size_t bs = 256;
    for (size_t start = 0; start < samples.size(); start += bs) {
        const size_t m = std::min(bs, samples.size() - start);
        Tensor x = Tensor::zeros({int(m), int(n)});
        for (size_t k = 0; k < m; ++k)
            std::copy(samples[start + k].weights.data.begin(),
                      samples[start + k].weights.data.end(), x.data() + k * n);
        Tensor vhat = model.decode_eval(model.encode_eval(x));
        const float* pw = x.data();
        const float* ph = vhat.data();
        for (size_t k = 0; k < m; ++k)
            for (size_t j = 0; j < n; ++j) {
                const double w = pw[k * n + j];
                const double d = w - ph[k * n + j];
                const double c = w - mean[j];
                sse += d * d;
                sst += c * c;
            }
    }
    if (sst == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return 1.0 - sse / sst;
}

std::vector<HyperRep> encode_samples(const HyperRepModel& model,
                                     const std::vector<ZooSample>& samples, int batch_size) {
    if (batch_size < 1) throw ConfigError("encode_samples: batch_size must be >= 1");
    NoGradGuard off;
    std::vector<HyperRep> out;
    out.reserve(samples.size());
    const size_t n = model.layout.total;
    const int L = model.latent_dim();
    for (size_t start = 0; start < samples.size(); start += size_t(batch_size)) {
        const size_t m = std::min(size_t(batch_size), samples.size() - start);
        Tensor x = Tensor::zeros({int(m), int(n)});
        for (size_t k = 0; k < m; ++k) {
            if (samples[start + k].weights.data.size() != n)
                throw LengthError("encode_samples: sample size does not match layout");
            std::copy(samples[start + k].weights.data.begin(),
                      samples[start + k].weights.data.end(), x.data() + k * n);
        }
        Tensor z = model.encode_eval(x);
        const float* pz = z.data();
        for (size_t k = 0; k < m; ++k) {
            HyperRep h;
            h.model_id = samples[start + k].model_id;
            h.epoch = samples[start + k].epoch;
            h.z.assign(pz + k * size_t(L), pz + (k + 1) * size_t(L));
            out.push_back(std::move(h));
        }
    }
    return out;
}

}  // namespace hz
