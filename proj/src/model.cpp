#include "hz/model.hpp"

#include <algorithm>
#include <cmath>

namespace hz {

InitKind init_from_string(const std::string& s) {
    if (s == "uniform") return InitKind::uniform;
    if (s == "normal") return InitKind::normal;
    if (s == "kaiming_uniform") return InitKind::kaiming_uniform;
    if (s == "kaiming_normal") return InitKind::kaiming_normal;
    if (s == "xavier_uniform") return InitKind::xavier_uniform;
    if (s == "xavier_normal") return InitKind::xavier_normal;
    throw ConfigError("unknown init: " + s);
}

const char* init_name(InitKind k) {
    switch (k) {
        case InitKind::uniform: return "uniform";
        case InitKind::normal: return "normal";
        case InitKind::kaiming_uniform: return "kaiming_uniform";
        case InitKind::kaiming_normal: return "kaiming_normal";
        case InitKind::xavier_uniform: return "xavier_uniform";
        case InitKind::xavier_normal: return "xavier_normal";
    }
    return "?";
}

WeightVector init_weights(const ArchSpec&, const LayerLayout& layout, InitKind kind,
                          uint64_t seed) {
    WeightVector v;
    v.layout_hash = layout.hash;
    v.data.assign(layout.total, 0.0f);
    RngStream rng = RngStream::root(seed).derive("init");
    for (size_t si = 0; si < layout.segments.size(); ++si) {
        const LayerSegment& seg = layout.segments[si];
        const double fan_in = double(seg.in_per_unit);
        const double fan_out = double(seg.units) * seg.receptive;
        double bound = 0.0, std = 0.0;
        bool use_uniform = true;
        switch (kind) {
            case InitKind::uniform: bound = 0.02; break;
            case InitKind::normal: std = 0.02; use_uniform = false; break;
            case InitKind::kaiming_uniform: bound = std::sqrt(6.0 / fan_in); break;
            case InitKind::kaiming_normal: std = std::sqrt(2.0 / fan_in); use_uniform = false; break;
            case InitKind::xavier_uniform: bound = std::sqrt(6.0 / (fan_in + fan_out)); break;
            case InitKind::xavier_normal: std = std::sqrt(2.0 / (fan_in + fan_out)); use_uniform = false; break;
        }
        RngStream ls = rng.derive(si);
        const size_t wn = size_t(seg.units) * seg.in_per_unit;
        for (size_t i = 0; i < wn; ++i)
            v.data[seg.w_off + i] =
                use_uniform ? float(ls.uniform(-bound, bound)) : float(ls.normal(0.0, std));
        if (seg.has_bias) {
            const bool bias_random = kind == InitKind::uniform || kind == InitKind::normal;
            for (int u = 0; u < seg.units; ++u)
                v.data[seg.b_off + size_t(u)] =
                    bias_random ? (use_uniform ? float(ls.uniform(-bound, bound))
                                               : float(ls.normal(0.0, std)))
                                : 0.0f;
        }
    }
    return v;
}

ModelParams params_from_vector(const LayerLayout& layout, const WeightVector& v,
                               bool requires_grad) {
    if (v.data.size() != layout.total)
        throw LengthError("params_from_vector: vector length mismatch");
    if (v.layout_hash != 0 && v.layout_hash != layout.hash)
        throw ConsistencyError("params_from_vector: layout hash mismatch");
    ModelParams p;
    for (const auto& seg : layout.segments) {
        std::vector<float> w(v.data.begin() + long(seg.w_off),
                             v.data.begin() + long(seg.w_off + size_t(seg.units) * seg.in_per_unit));
        p.tensors.push_back(
            Tensor::from({seg.units, seg.in_per_unit}, std::move(w), requires_grad));
        if (seg.has_bias) {
            std::vector<float> b(v.data.begin() + long(seg.b_off),
                                 v.data.begin() + long(seg.b_off + size_t(seg.units)));
            p.tensors.push_back(Tensor::from({seg.units}, std::move(b), requires_grad));
        }
    }
    return p;
}

WeightVector vector_from_params(const LayerLayout& layout, const ModelParams& p) {
    WeightVector v;
    v.layout_hash = layout.hash;
    v.data.assign(layout.total, 0.0f);
    size_t ti = 0;
    for (const auto& seg : layout.segments) {
        const Tensor& w = p.tensors.at(ti++);
        std::copy(w.data(), w.data() + w.numel(), v.data.begin() + long(seg.w_off));
        if (seg.has_bias) {
            const Tensor& b = p.tensors.at(ti++);
            std::copy(b.data(), b.data() + b.numel(), v.data.begin() + long(seg.b_off));
        }
    }
    return v;
}

Tensor forward_logits(const ArchSpec& arch, const ModelParams& p, const float* pixels, int n,
                      bool training, double dropout_p, RngStream& rng) {
    const int c = arch.input_shape[0], h = arch.input_shape[1], w = arch.input_shape[2];
    Tensor x = Tensor::from({n, c, h, w},
                            std::vector<float>(pixels, pixels + size_t(n) * c * h * w));
    size_t ti = 0;
    bool flat = false;
    for (const auto& l : arch.layers) {
        switch (l.kind) {
            case LayerKind::flatten:
                x = reshape(x, {n, int(x.numel() / size_t(n))});
                flat = true;
                break;
            case LayerKind::act:
                x = activation(x, l.act);
                break;
            case LayerKind::maxpool:
                x = maxpool2d(x, l.ksize);
                break;
            case LayerKind::dense: {
                const Tensor& wt = p.tensors.at(ti++);
                const Tensor* bt = l.has_bias ? &p.tensors.at(ti++) : nullptr;
                if (!flat) throw DimensionError("forward: dense before flatten");
                if (dropout_p > 0.0) x = dropout(x, dropout_p, training, rng);
                x = linear(x, wt, bt);
                break;
            }
            case LayerKind::conv: {
                const Tensor& kt0 = p.tensors.at(ti++);
                Tensor kt = reshape(kt0, {l.out, l.in, l.ksize, l.ksize});
                const Tensor* bt = l.has_bias ? &p.tensors.at(ti++) : nullptr;
                x = conv2d_batch(x, kt, bt);
                break;
            }
        }
    }
    return x;
}

namespace {

void accuracy_counts(const ArchSpec& arch, const ModelParams& p, const ImageDataset& d,
                     double& acc, double& loss, std::vector<double>* f1) {
    NoGradGuard ng;
    RngStream dummy = RngStream::root(0);
    const int classes = arch.classes;
    std::vector<int> tp(classes, 0), fp(classes, 0), fn(classes, 0);
    size_t correct = 0;
    double loss_acc = 0.0;
    const int bs = 256;
    for (size_t start = 0; start < d.size(); start += bs) {
        const int nb = int(std::min(size_t(bs), d.size() - start));
        Tensor logits = forward_logits(arch, p, d.sample(start), nb, false, 0.0, dummy);
        std::vector<int> labels(d.labels.begin() + long(start), d.labels.begin() + long(start + nb));
        Tensor nll = softmax_cross_entropy(logits, labels);
        loss_acc += double(nll.item()) * nb;
        const float* pl = logits.data();
        for (int i = 0; i < nb; ++i) {
            int best = 0;
            for (int j = 1; j < classes; ++j)
                if (pl[i * classes + j] > pl[i * classes + best]) best = j;
            const int truth = labels[size_t(i)];
            if (best == truth) { ++correct; ++tp[size_t(best)]; }
            else { ++fp[size_t(best)]; ++fn[size_t(truth)]; }
        }
    }
    acc = d.size() ? double(correct) / double(d.size()) : 0.0;
    loss = d.size() ? loss_acc / double(d.size()) : 0.0;
    if (f1) {
        f1->assign(size_t(classes), 0.0);
        for (int cidx = 0; cidx < classes; ++cidx) {
            const double denom = 2.0 * tp[size_t(cidx)] + fp[size_t(cidx)] + fn[size_t(cidx)];
            (*f1)[size_t(cidx)] = denom > 0.0 ? 2.0 * tp[size_t(cidx)] / denom : 0.0;
        }
    }
}

}  // namespace

EvalResult evaluate_model(const ArchSpec& arch, const ModelParams& p, const ImageDataset& d) {
    EvalResult r;
    accuracy_counts(arch, p, d, r.accuracy, r.mean_loss, &r.per_class_f1);
    return r;
}

TrainOutcome train_model(const ArchSpec& arch, const LayerLayout& layout,
                         const ImageDataset& train_set, const ImageDataset& test_set,
                         const TrainConfig& config, const WeightVector& initial,
                         const std::function<void(int, const WeightVector&, const EpochRecord&)>&
                             per_epoch) {
    if (config.epochs <= 0) throw ConfigError("train_model: epochs must be positive");
    if (config.batch_size <= 0) throw ConfigError("train_model: batch_size must be positive");
    if (train_set.size() == 0) throw ConfigError("train_model: empty train set");

    TrainOutcome out;
    ModelParams params = params_from_vector(layout, initial, true);
    OptimizerState state;
    OptimConfig ocfg;
    ocfg.kind = config.optimizer;
    ocfg.lr = config.lr;
    ocfg.weight_decay = config.l2_reg;

    RngStream root = RngStream::root(config.seed);
    const size_t n = train_set.size();
    const size_t dim = train_set.sample_dim();
    std::vector<size_t> order(n);
    std::vector<float> batch_px(size_t(config.batch_size) * dim);
    std::vector<int> batch_y(size_t(config.batch_size));

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        RngStream shuffle = root.derive("shuffle").derive(uint64_t(epoch));
        RngStream drop = root.derive("dropout").derive(uint64_t(epoch));
        for (size_t i = 0; i < n; ++i) order[i] = i;
        for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double loss_sum = 0.0;
        size_t loss_count = 0;
        bool blown_up = false;
        for (size_t start = 0; start < n && !blown_up; start += size_t(config.batch_size)) {
            const int nb = int(std::min(size_t(config.batch_size), n - start));
            for (int i = 0; i < nb; ++i) {
                std::copy(train_set.sample(order[start + i]),
                          train_set.sample(order[start + i]) + dim, batch_px.data() + size_t(i) * dim);
                batch_y[size_t(i)] = train_set.labels[order[start + i]];
            }
            for (auto& t : params.tensors) t.zero_grad();
            Tensor logits = forward_logits(arch, params, batch_px.data(), nb, true,
                                           config.dropout, drop);
            std::vector<int> lab(batch_y.begin(), batch_y.begin() + nb);
            Tensor loss = softmax_cross_entropy(logits, lab);
            const double lv = double(loss.item());
            if (!std::isfinite(lv)) {
                out.crashed = true;
                out.crash_reason = "non-finite training loss at epoch " + std::to_string(epoch);
                blown_up = true;
                break;
            }
            loss_sum += lv;
            ++loss_count;
            loss.backward();
            optimizer_step(params.tensors, state, ocfg);
        }
        if (out.crashed) break;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_count ? loss_sum / double(loss_count) : 0.0;
        double dummy_loss = 0.0;
        accuracy_counts(arch, params, train_set, rec.train_acc, dummy_loss, nullptr);
        accuracy_counts(arch, params, test_set, rec.test_acc, dummy_loss, &rec.per_class_f1);
        rec.generalization_gap = rec.train_acc - rec.test_acc;
        out.epochs.push_back(rec);
        if (per_epoch) {
            WeightVector snap = vector_from_params(layout, params);
            snap.epoch = epoch;
            per_epoch(epoch, snap, rec);
        }
    }
    out.final_weights = vector_from_params(layout, params);
    if (!out.crashed && !out.epochs.empty()) {
        const double chance = 1.0 / double(arch.classes);
        if (out.epochs.back().train_acc < chance - 0.05) {
            out.crashed = true;
            out.crash_reason = "final train accuracy below chance cutoff";
        }
    }
    return out;
}

}  // namespace hz
