#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hz/tensor.hpp"

namespace hz {

enum class OptimKind { adam, sgd };

inline OptimKind optim_from_string(const std::string& s) {
    if (s == "adam") return OptimKind::adam;
    if (s == "sgd") return OptimKind::sgd;
    throw ConfigError("unknown optimizer: " + s);
}

inline const char* optim_name(OptimKind k) { return k == OptimKind::adam ? "adam" : "sgd"; }

struct OptimConfig {
    OptimKind kind = OptimKind::adam;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam moments are kept per parameter tensor, indexed by position in the
// parameter list handed to optimizer_step. The list must stay stable across
// steps for a given state object.
template <class S>
struct OptimizerStateT {
    int64_t step = 0;
    std::vector<std::vector<S>> m;
    std::vector<std::vector<S>> v;

    void reset() { step = 0; m.clear(); v.clear(); }
};

using OptimizerState = OptimizerStateT<float>;

// One update from the gradients currently stored on the parameters.
// adam folds weight decay into the gradient before the moment update
// (classic L2 coupling); sgd applies p <- p - lr * (g + wd * p).
template <class S>
void optimizer_step(std::vector<TensorT<S>>& params, OptimizerStateT<S>& state,
                    const OptimConfig& cfg) {
    if (cfg.lr <= 0.0) throw ConfigError("optimizer_step: lr must be positive");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].numel(), S(0));
            state.v[i].assign(params[i].numel(), S(0));
        }
    }
    if (state.m.size() != params.size())
        throw StateError("optimizer_step: state was initialized for a different parameter list");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (state.m[i].size() != p.numel())
            throw StateError("optimizer_step: parameter shape changed under existing state");
        S* pv = p.data();
        S* pg = p.grad().data();
        const size_t n = p.numel();
        if (cfg.kind == OptimKind::sgd) {
            const S lr = S(cfg.lr), wd = S(cfg.weight_decay);
            for (size_t j = 0; j < n; ++j) pv[j] -= lr * (pg[j] + wd * pv[j]);
            continue;
        }
        S* m = state.m[i].data();
        S* v = state.v[i].data();
        const S b1 = S(cfg.beta1), b2 = S(cfg.beta2), wd = S(cfg.weight_decay);
        for (size_t j = 0; j < n; ++j) {
            const S g = pg[j] + wd * pv[j];
            m[j] = b1 * m[j] + (S(1) - b1) * g;
            v[j] = b2 * v[j] + (S(1) - b2) * g * g;
            const double mhat = double(m[j]) / bc1;
            const double vhat = double(v[j]) / bc2;
            pv[j] -= S(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

}  // namespace hz
