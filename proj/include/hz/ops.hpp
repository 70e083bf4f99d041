#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hz/gemm.hpp"
#include "hz/rng.hpp"
#include "hz/tensor.hpp"

namespace hz {

enum class Act { identity, tanh_fn, relu, sigmoid, gelu };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::identity: return "identity";
        case Act::tanh_fn: return "tanh";
        case Act::relu: return "relu";
        case Act::sigmoid: return "sigmoid";
        case Act::gelu: return "gelu";
    }
    return "?";
}

namespace detail {

template <class S>
bool want_grad(std::initializer_list<const TensorT<S>*> ins) {
    if (!grad_mode_flag()) return false;
    for (const auto* t : ins)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

template <class S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

// Rows = volume of all but the last dimension.
template <class S>
size_t row_count(const TensorT<S>& t) {
    size_t r = 1;
    const auto& s = t.shape();
    for (size_t i = 0; i + 1 < s.size(); ++i) r *= size_t(s[i]);
    return r;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "add");
    auto out = TensorT<S>::zeros(a.shape());
    const size_t n = a.numel();
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (detail::want_grad<S>({&a, &b})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {a.node(), b.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = a.node().get(); NodeT<S>* bn = b.node().get();
        on->backward_fn = [o, an, bn, n]() {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < n; ++i) bn->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "sub");
    auto out = TensorT<S>::zeros(a.shape());
    const size_t n = a.numel();
    const S* pa = a.data(); const S* pb = b.data(); S* po = out.data();
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    if (detail::want_grad<S>({&a, &b})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {a.node(), b.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = a.node().get(); NodeT<S>* bn = b.node().get();
        on->backward_fn = [o, an, bn, n]() {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < n; ++i) bn->grad[i] -= o->grad[i];
            }
        };
    }
    return out;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "mul");
    auto out = TensorT<S>::zeros(a.shape());
    const size_t n = a.numel();
    const S* pa = a.data(); const S* pb = b.data(); S* po = out.data();
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (detail::want_grad<S>({&a, &b})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {a.node(), b.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = a.node().get(); NodeT<S>* bn = b.node().get();
        on->backward_fn = [o, an, bn, n]() {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < n; ++i) bn->grad[i] += o->grad[i] * an->value[i];
            }
        };
    }
    return out;
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, double c) {
    auto out = TensorT<S>::zeros(a.shape());
    const size_t n = a.numel();
    const S* pa = a.data(); S* po = out.data();
    const S cs = S(c);
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] * cs;
    if (detail::want_grad<S>({&a})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {a.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = a.node().get();
        on->backward_fn = [o, an, n, cs]() {
            an->ensure_grad();
            for (size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i] * cs;
        };
    }
    return out;
}

template <class S>
TensorT<S> add_const(const TensorT<S>& a, double c) {
    auto out = TensorT<S>::zeros(a.shape());
    const size_t n = a.numel();
    const S* pa = a.data(); S* po = out.data();
    const S cs = S(c);
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] + cs;
    if (detail::want_grad<S>({&a})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {a.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = a.node().get();
        on->backward_fn = [o, an, n]() {
            an->ensure_grad();
            for (size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i];
        };
    }
    return out;
}

// ---------------------------------------------------------------- shaping

template <class S>
TensorT<S> reshape(const TensorT<S>& a, std::vector<int> shape) {
    auto out = TensorT<S>::from(std::move(shape), a.values());
    if (out.numel() != a.numel())
        throw DimensionError("reshape: volume mismatch " + shape_str(a.shape()) + " -> " +
                             shape_str(out.shape()));
    if (detail::want_grad<S>({&a})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {a.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = a.node().get();
        const size_t n = a.numel();
        on->backward_fn = [o, an, n]() {
            an->ensure_grad();
            for (size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i];
        };
    }
    return out;
}

template <class S>
TensorT<S> concat0(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() != b.rank() || a.rank() < 1)
        throw DimensionError("concat0: rank mismatch");
    for (size_t i = 1; i < a.rank(); ++i)
        if (a.shape()[i] != b.shape()[i])
            throw DimensionError("concat0: trailing dims differ");
    std::vector<int> shape = a.shape();
    shape[0] += b.shape()[0];
    auto out = TensorT<S>::zeros(shape);
    std::copy(a.data(), a.data() + a.numel(), out.data());
    std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
    if (detail::want_grad<S>({&a, &b})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {a.node(), b.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = a.node().get(); NodeT<S>* bn = b.node().get();
        const size_t na = a.numel(), nb = b.numel();
        on->backward_fn = [o, an, bn, na, nb]() {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < na; ++i) an->grad[i] += o->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < nb; ++i) bn->grad[i] += o->grad[na + i];
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------- matmul family

// a[m,k] * b[k,n] -> [m,n]
template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const size_t m = size_t(a.dim(0)), k = size_t(a.dim(1)), n = size_t(b.dim(1));
    auto out = TensorT<S>::zeros({int(m), int(n)});
    gemm_nn(a.data(), b.data(), out.data(), m, k, n);
    if (detail::want_grad<S>({&a, &b})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {a.node(), b.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = a.node().get(); NodeT<S>* bn = b.node().get();
        on->backward_fn = [o, an, bn, m, k, n]() {
            if (an->requires_grad) {
                an->ensure_grad();
                gemm_nt(o->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                gemm_tn(an->value.data(), o->grad.data(), bn->grad.data(), m, k, n);
            }
        };
    }
    return out;
}

// a[m,k] * b[n,k]^T -> [m,n]
template <class S>
TensorT<S> matmul_nt(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw DimensionError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
    const size_t m = size_t(a.dim(0)), k = size_t(a.dim(1)), n = size_t(b.dim(0));
    auto out = TensorT<S>::zeros({int(m), int(n)});
    gemm_nt(a.data(), b.data(), out.data(), m, k, n);
    if (detail::want_grad<S>({&a, &b})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {a.node(), b.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = a.node().get(); NodeT<S>* bn = b.node().get();
        on->backward_fn = [o, an, bn, m, k, n]() {
            if (an->requires_grad) {
                an->ensure_grad();
                gemm_nn(o->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                gemm_tn(o->grad.data(), an->value.data(), bn->grad.data(), m, n, k);
            }
        };
    }
    return out;
}

// x[m,k] * w[n,k]^T + bias[n] -> [m,n]; w rows are output units.
template <class S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>* bias = nullptr) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
        throw DimensionError("linear: incompatible shapes " + shape_str(x.shape()) + " x " +
                             shape_str(w.shape()) + "^T");
    const size_t m = size_t(x.dim(0)), k = size_t(x.dim(1)), n = size_t(w.dim(0));
    if (bias && bias->numel() != n) throw DimensionError("linear: bias size mismatch");
    auto out = TensorT<S>::zeros({int(m), int(n)});
    S* po = out.data();
    if (bias) {
        const S* pb = bias->data();
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) po[i * n + j] = pb[j];
    }
    gemm_nt(x.data(), w.data(), po, m, k, n);
    bool wg = bias ? detail::want_grad<S>({&x, &w, bias}) : detail::want_grad<S>({&x, &w});
    if (wg) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node(), w.node()};
        if (bias) on->parents.push_back(bias->node());
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get(); NodeT<S>* wn = w.node().get();
        NodeT<S>* bn = bias ? bias->node().get() : nullptr;
        on->backward_fn = [o, xn, wn, bn, m, k, n]() {
            if (xn->requires_grad) {
                xn->ensure_grad();
                gemm_nn(o->grad.data(), wn->value.data(), xn->grad.data(), m, n, k);
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                gemm_tn(o->grad.data(), xn->value.data(), wn->grad.data(), m, n, k);
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < n; ++j) bn->grad[j] += o->grad[i * n + j];
            }
        };
    }
    return out;
}

template <class S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias) {
    return linear(x, w, &bias);
}

// ---------------------------------------------------------------- activations

template <class S>
TensorT<S> activation(const TensorT<S>& x, Act act) {
    auto out = TensorT<S>::zeros(x.shape());
    const size_t n = x.numel();
    const S* px = x.data(); S* po = out.data();
    switch (act) {
        case Act::identity:
            std::copy(px, px + n, po);
            break;
        case Act::tanh_fn:
            for (size_t i = 0; i < n; ++i) po[i] = std::tanh(px[i]);
            break;
        case Act::relu:
            for (size_t i = 0; i < n; ++i) po[i] = px[i] > S(0) ? px[i] : S(0);
            break;
        case Act::sigmoid:
            for (size_t i = 0; i < n; ++i) po[i] = S(1) / (S(1) + std::exp(-px[i]));
            break;
        case Act::gelu:
            for (size_t i = 0; i < n; ++i) {
                const S cdf = S(0.5) * (S(1) + std::erf(px[i] * S(0.70710678118654752440)));
                po[i] = px[i] * cdf;
            }
            break;
    }
    if (detail::want_grad<S>({&x})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get();
        on->backward_fn = [o, xn, n, act]() {
            xn->ensure_grad();
            switch (act) {
                case Act::identity:
                    for (size_t i = 0; i < n; ++i) xn->grad[i] += o->grad[i];
                    break;
                case Act::tanh_fn:
                    for (size_t i = 0; i < n; ++i) {
                        const S y = o->value[i];
                        xn->grad[i] += o->grad[i] * (S(1) - y * y);
                    }
                    break;
                case Act::relu:
                    for (size_t i = 0; i < n; ++i)
                        if (xn->value[i] > S(0)) xn->grad[i] += o->grad[i];
                    break;
                case Act::sigmoid:
                    for (size_t i = 0; i < n; ++i) {
                        const S y = o->value[i];
                        xn->grad[i] += o->grad[i] * y * (S(1) - y);
                    }
                    break;
                case Act::gelu:
                    for (size_t i = 0; i < n; ++i) {
                        const S v = xn->value[i];
                        const S cdf = S(0.5) * (S(1) + std::erf(v * S(0.70710678118654752440)));
                        const S pdf = S(0.39894228040143267794) * std::exp(S(-0.5) * v * v);
                        xn->grad[i] += o->grad[i] * (cdf + v * pdf);
                    }
                    break;
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------- reductions & losses

template <class S>
TensorT<S> sum_all(const TensorT<S>& x) {
    double acc = 0.0;
    const size_t n = x.numel();
    const S* px = x.data();
    for (size_t i = 0; i < n; ++i) acc += double(px[i]);
    auto out = TensorT<S>::scalar(S(acc));
    if (detail::want_grad<S>({&x})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get();
        on->backward_fn = [o, xn, n]() {
            xn->ensure_grad();
            const S g = o->grad[0];
            for (size_t i = 0; i < n; ++i) xn->grad[i] += g;
        };
    }
    return out;
}

template <class S>
TensorT<S> mean_all(const TensorT<S>& x) {
    return scale(sum_all(x), 1.0 / double(x.numel()));
}

// Mean over leading-dim samples of the squared L2 distance between rows.
template <class S>
TensorT<S> mse_loss(const TensorT<S>& pred, const TensorT<S>& target) {
    detail::require_same_shape(pred, target, "mse_loss");
    const size_t m = size_t(pred.shape()[0]);
    const size_t n = pred.numel();
    double acc = 0.0;
    const S* pa = pred.data(); const S* pb = target.data();
    for (size_t i = 0; i < n; ++i) {
        const double d = double(pa[i]) - double(pb[i]);
        acc += d * d;
    }
    auto out = TensorT<S>::scalar(S(acc / double(m)));
    if (detail::want_grad<S>({&pred, &target})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {pred.node(), target.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = pred.node().get(); NodeT<S>* bn = target.node().get();
        on->backward_fn = [o, an, bn, m, n]() {
            const S g = o->grad[0] * S(2.0 / double(m));
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < n; ++i) an->grad[i] += g * (an->value[i] - bn->value[i]);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < n; ++i) bn->grad[i] -= g * (an->value[i] - bn->value[i]);
            }
        };
    }
    return out;
}

// logits[n, classes], labels in [0, classes); returns mean negative log-likelihood.
template <class S>
TensorT<S> softmax_cross_entropy(const TensorT<S>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw DimensionError("softmax_cross_entropy: logits must be [n, classes]");
    const size_t n = size_t(logits.dim(0)), c = size_t(logits.dim(1));
    if (labels.size() != n) throw DimensionError("softmax_cross_entropy: label count mismatch");
    for (int y : labels)
        if (y < 0 || size_t(y) >= c) throw IndexError("softmax_cross_entropy: label out of range");
    auto probs = std::make_shared<std::vector<S>>(n * c);
    const S* pl = logits.data();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const S* row = pl + i * c;
        S mx = row[0];
        for (size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (size_t j = 0; j < c; ++j) z += std::exp(double(row[j] - mx));
        const double logz = std::log(z) + double(mx);
        for (size_t j = 0; j < c; ++j) (*probs)[i * c + j] = S(std::exp(double(row[j]) - logz));
        acc -= double(row[labels[i]]) - logz;
    }
    auto out = TensorT<S>::scalar(S(acc / double(n)));
    if (detail::want_grad<S>({&logits})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {logits.node()};
        NodeT<S>* o = on.get(); NodeT<S>* ln = logits.node().get();
        auto lab = std::make_shared<std::vector<int>>(labels);
        on->backward_fn = [o, ln, probs, lab, n, c]() {
            ln->ensure_grad();
            const S g = o->grad[0] / S(double(n));
            for (size_t i = 0; i < n; ++i) {
                for (size_t j = 0; j < c; ++j)
                    ln->grad[i * c + j] += g * (*probs)[i * c + j];
                ln->grad[i * c + size_t((*lab)[i])] -= g;
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------- conv / pool

// x[n_in, c_in, h, w], kernel[c_out, c_in, kh, kw], optional bias[c_out].
// Valid cross-correlation, stride 1.
template <class S>
TensorT<S> conv2d_batch(const TensorT<S>& x, const TensorT<S>& kernel, const TensorT<S>* bias) {
    if (x.rank() != 4 || kernel.rank() != 4)
        throw DimensionError("conv2d: expected x[n,c,h,w], kernel[o,c,kh,kw]");
    const int nb = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int co = kernel.dim(0), kci = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (ci != kci) throw DimensionError("conv2d: channel mismatch");
    const int oh = h - kh + 1, ow = w - kw + 1;
    if (oh <= 0 || ow <= 0) throw DimensionError("conv2d: kernel larger than input");
    if (bias && bias->numel() != size_t(co)) throw DimensionError("conv2d: bias size mismatch");
    auto out = TensorT<S>::zeros({nb, co, oh, ow});
    const S* px = x.data(); const S* pk = kernel.data(); S* po = out.data();
    for (int b = 0; b < nb; ++b)
        for (int o = 0; o < co; ++o) {
            S* omap = po + ((size_t(b) * co + o) * oh) * ow;
            if (bias) {
                const S bv = bias->data()[o];
                for (int i = 0; i < oh * ow; ++i) omap[i] = bv;
            }
            for (int c = 0; c < ci; ++c) {
                const S* imap = px + ((size_t(b) * ci + c) * h) * w;
                const S* kmap = pk + ((size_t(o) * ci + c) * kh) * kw;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        const S kv = kmap[ky * kw + kx];
                        for (int y = 0; y < oh; ++y) {
                            const S* irow = imap + (y + ky) * w + kx;
                            S* orow = omap + y * ow;
                            for (int xx = 0; xx < ow; ++xx) orow[xx] += kv * irow[xx];
                        }
                    }
            }
        }
    bool wg = bias ? detail::want_grad<S>({&x, &kernel, bias}) : detail::want_grad<S>({&x, &kernel});
    if (wg) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node(), kernel.node()};
        if (bias) on->parents.push_back(bias->node());
        NodeT<S>* on_ = on.get(); NodeT<S>* xn = x.node().get(); NodeT<S>* kn = kernel.node().get();
        NodeT<S>* bn = bias ? bias->node().get() : nullptr;
        on->backward_fn = [on_, xn, kn, bn, nb, ci, h, w, co, kh, kw, oh, ow]() {
            const S* pg = on_->grad.data();
            if (xn->requires_grad) xn->ensure_grad();
            if (kn->requires_grad) kn->ensure_grad();
            if (bn && bn->requires_grad) bn->ensure_grad();
            for (int b = 0; b < nb; ++b)
                for (int o = 0; o < co; ++o) {
                    const S* gmap = pg + ((size_t(b) * co + o) * oh) * ow;
                    if (bn && bn->requires_grad) {
                        S acc = 0;
                        for (int i = 0; i < oh * ow; ++i) acc += gmap[i];
                        bn->grad[o] += acc;
                    }
                    for (int c = 0; c < ci; ++c) {
                        const S* imap = xn->value.data() + ((size_t(b) * ci + c) * h) * w;
                        const S* kmap = kn->value.data() + ((size_t(o) * ci + c) * kh) * kw;
                        S* gimap = xn->requires_grad
                                       ? xn->grad.data() + ((size_t(b) * ci + c) * h) * w
                                       : nullptr;
                        S* gkmap = kn->requires_grad
                                       ? kn->grad.data() + ((size_t(o) * ci + c) * kh) * kw
                                       : nullptr;
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const S kv = kmap[ky * kw + kx];
                                S kacc = 0;
                                for (int y = 0; y < oh; ++y) {
                                    const S* grow = gmap + y * ow;
                                    const S* irow = imap + (y + ky) * w + kx;
                                    if (gimap) {
                                        S* girow = gimap + (y + ky) * w + kx;
                                        for (int xx = 0; xx < ow; ++xx) girow[xx] += kv * grow[xx];
                                    }
                                    if (gkmap)
                                        for (int xx = 0; xx < ow; ++xx) kacc += grow[xx] * irow[xx];
                                }
                                if (gkmap) gkmap[ky * kw + kx] += kacc;
                            }
                    }
                }
        };
    }
    return out;
}

// Single-sample view: x[c_in, h, w] -> [c_out, oh, ow].
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& kernel, const TensorT<S>* bias = nullptr) {
    if (x.rank() != 3) throw DimensionError("conv2d: expected x[c,h,w]");
    auto x4 = reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
    auto y = conv2d_batch(x4, kernel, bias);
    return reshape(y, {y.dim(1), y.dim(2), y.dim(3)});
}

template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& kernel, const TensorT<S>& bias) {
    return conv2d(x, kernel, &bias);
}

// Max pooling with square window ks, stride ks, floor semantics. Accepts
// [c,h,w] or [n,c,h,w]; ties resolve to the first element scanned.
template <class S>
TensorT<S> maxpool2d(const TensorT<S>& x, int ks) {
    if (ks <= 0) throw DimensionError("maxpool2d: window must be positive");
    if (x.rank() != 3 && x.rank() != 4) throw DimensionError("maxpool2d: expected [c,h,w] or [n,c,h,w]");
    const bool batched = x.rank() == 4;
    const int maps = batched ? x.dim(0) * x.dim(1) : x.dim(0);
    const int h = x.dim(int(x.rank()) - 2), w = x.dim(int(x.rank()) - 1);
    const int oh = h / ks, ow = w / ks;
    if (oh == 0 || ow == 0) throw DimensionError("maxpool2d: window larger than input");
    std::vector<int> oshape = x.shape();
    oshape[x.rank() - 2] = oh;
    oshape[x.rank() - 1] = ow;
    auto out = TensorT<S>::zeros(oshape);
    auto argmax = std::make_shared<std::vector<uint32_t>>(size_t(maps) * oh * ow);
    const S* px = x.data(); S* po = out.data();
    for (int m = 0; m < maps; ++m) {
        const S* imap = px + size_t(m) * h * w;
        S* omap = po + size_t(m) * oh * ow;
        uint32_t* amap = argmax->data() + size_t(m) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                int best = (y * ks) * w + xx * ks;
                S bv = imap[best];
                for (int dy = 0; dy < ks; ++dy)
                    for (int dx = 0; dx < ks; ++dx) {
                        const int idx = (y * ks + dy) * w + (xx * ks + dx);
                        if (imap[idx] > bv) { bv = imap[idx]; best = idx; }
                    }
                omap[y * ow + xx] = bv;
                amap[y * ow + xx] = uint32_t(best);
            }
    }
    if (detail::want_grad<S>({&x})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get();
        const size_t hw = size_t(h) * w, ohw = size_t(oh) * ow;
        on->backward_fn = [o, xn, argmax, maps, hw, ohw]() {
            xn->ensure_grad();
            for (int m = 0; m < maps; ++m)
                for (size_t i = 0; i < ohw; ++i)
                    xn->grad[size_t(m) * hw + (*argmax)[size_t(m) * ohw + i]] += o->grad[size_t(m) * ohw + i];
        };
    }
    return out;
}

// ---------------------------------------------------------------- normalization

// Normalizes over the last dimension; gain/bias have that dimension.
template <class S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gain, const TensorT<S>& bias,
                      double eps = 1e-5) {
    const size_t d = size_t(x.shape().back());
    if (gain.numel() != d || bias.numel() != d)
        throw DimensionError("layer_norm: gain/bias must match last dim");
    const size_t rows = detail::row_count(x);
    auto out = TensorT<S>::zeros(x.shape());
    auto xhat = std::make_shared<std::vector<S>>(rows * d);
    auto istd = std::make_shared<std::vector<S>>(rows);
    const S* px = x.data(); const S* pg = gain.data(); const S* pb = bias.data();
    S* po = out.data();
    for (size_t r = 0; r < rows; ++r) {
        const S* row = px + r * d;
        double mu = 0.0;
        for (size_t j = 0; j < d; ++j) mu += double(row[j]);
        mu /= double(d);
        double var = 0.0;
        for (size_t j = 0; j < d; ++j) {
            const double c = double(row[j]) - mu;
            var += c * c;
        }
        var /= double(d);
        const S is = S(1.0 / std::sqrt(var + eps));
        (*istd)[r] = is;
        for (size_t j = 0; j < d; ++j) {
            const S xh = (row[j] - S(mu)) * is;
            (*xhat)[r * d + j] = xh;
            po[r * d + j] = xh * pg[j] + pb[j];
        }
    }
    if (detail::want_grad<S>({&x, &gain, &bias})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node(), gain.node(), bias.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get();
        NodeT<S>* gn = gain.node().get(); NodeT<S>* bn = bias.node().get();
        on->backward_fn = [o, xn, gn, bn, xhat, istd, rows, d]() {
            if (gn->requires_grad) gn->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            if (xn->requires_grad) xn->ensure_grad();
            for (size_t r = 0; r < rows; ++r) {
                const S* go = o->grad.data() + r * d;
                const S* xh = xhat->data() + r * d;
                if (gn->requires_grad || bn->requires_grad)
                    for (size_t j = 0; j < d; ++j) {
                        if (gn->requires_grad) gn->grad[j] += go[j] * xh[j];
                        if (bn->requires_grad) bn->grad[j] += go[j];
                    }
                if (xn->requires_grad) {
                    double s1 = 0.0, s2 = 0.0;
                    for (size_t j = 0; j < d; ++j) {
                        const double dxh = double(go[j]) * double(gn->value[j]);
                        s1 += dxh;
                        s2 += dxh * double(xh[j]);
                    }
                    const double inv_d = 1.0 / double(d);
                    const S is = (*istd)[r];
                    S* gx = xn->grad.data() + r * d;
                    for (size_t j = 0; j < d; ++j) {
                        const double dxh = double(go[j]) * double(gn->value[j]);
                        gx[j] += S((dxh - s1 * inv_d - double(xh[j]) * s2 * inv_d) * double(is));
                    }
                }
            }
        };
    }
    return out;
}

// Rows scaled to unit L2 norm; rows with norm below eps are scaled by 1/eps.
template <class S>
TensorT<S> l2_normalize_rows(const TensorT<S>& x, double eps = 1e-12) {
    if (x.rank() != 2) throw DimensionError("l2_normalize_rows: expected [m,d]");
    const size_t m = size_t(x.dim(0)), d = size_t(x.dim(1));
    auto out = TensorT<S>::zeros(x.shape());
    auto inv = std::make_shared<std::vector<S>>(m);
    auto clamped = std::make_shared<std::vector<uint8_t>>(m);
    const S* px = x.data(); S* po = out.data();
    for (size_t i = 0; i < m; ++i) {
        double nn = 0.0;
        for (size_t j = 0; j < d; ++j) nn += double(px[i * d + j]) * double(px[i * d + j]);
        const double norm = std::sqrt(nn);
        (*clamped)[i] = norm < eps;
        const double r = norm < eps ? eps : norm;
        (*inv)[i] = S(1.0 / r);
        for (size_t j = 0; j < d; ++j) po[i * d + j] = px[i * d + j] * (*inv)[i];
    }
    if (detail::want_grad<S>({&x})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get();
        on->backward_fn = [o, xn, inv, clamped, m, d]() {
            xn->ensure_grad();
            for (size_t i = 0; i < m; ++i) {
                const S is = (*inv)[i];
                if ((*clamped)[i]) {
                    for (size_t j = 0; j < d; ++j) xn->grad[i * d + j] += o->grad[i * d + j] * is;
                    continue;
                }
                double dot = 0.0;
                for (size_t j = 0; j < d; ++j)
                    dot += double(o->grad[i * d + j]) * double(o->value[i * d + j]);
                for (size_t j = 0; j < d; ++j)
                    xn->grad[i * d + j] +=
                        (o->grad[i * d + j] - o->value[i * d + j] * S(dot)) * is;
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------- dropout

// Inverted dropout: keep with probability 1-p and scale kept values by
// 1/(1-p); identity when not training. Mask order is a pure function of the
// stream state, so a given stream position reproduces the same mask.
template <class S>
TensorT<S> dropout(const TensorT<S>& x, double p, bool training, RngStream& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
    if (!training || p == 0.0) {
        // Pass-through that still participates in the graph.
        return scale(x, 1.0);
    }
    const size_t n = x.numel();
    auto mask = std::make_shared<std::vector<S>>(n);
    const S keep = S(1.0 / (1.0 - p));
    for (size_t i = 0; i < n; ++i) (*mask)[i] = rng.uniform01() < p ? S(0) : keep;
    auto out = TensorT<S>::zeros(x.shape());
    const S* px = x.data(); S* po = out.data();
    for (size_t i = 0; i < n; ++i) po[i] = px[i] * (*mask)[i];
    if (detail::want_grad<S>({&x})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get();
        on->backward_fn = [o, xn, mask, n]() {
            xn->ensure_grad();
            for (size_t i = 0; i < n; ++i) xn->grad[i] += o->grad[i] * (*mask)[i];
        };
    }
    return out;
}

// ---------------------------------------------------------------- attention

// Scaled dot-product attention over `batch` independent sequences of length
// `seq` packed row-major into [batch*seq, dim]; dim splits into `heads`
// equal slices. Softmax is per query row within one (sequence, head).
template <class S>
TensorT<S> attention_mix(const TensorT<S>& q, const TensorT<S>& k, const TensorT<S>& v,
                         int batch, int seq, int heads) {
    detail::require_same_shape(q, k, "attention_mix");
    detail::require_same_shape(q, v, "attention_mix");
    if (q.rank() != 2 || q.dim(0) != batch * seq)
        throw DimensionError("attention_mix: rows must equal batch*seq");
    const int d = q.dim(1);
    if (heads <= 0 || d % heads != 0)
        throw DimensionError("attention_mix: dim not divisible by heads");
    const int dh = d / heads;
    const S iscale = S(1.0 / std::sqrt(double(dh)));
    auto out = TensorT<S>::zeros(q.shape());
    auto probs = std::make_shared<std::vector<S>>(size_t(batch) * heads * seq * seq);

    const S* pq = q.data(); const S* pk = k.data(); const S* pv = v.data();
    S* po = out.data();
    std::vector<S> sc(size_t(seq) * seq);
    for (int b = 0; b < batch; ++b)
        for (int h = 0; h < heads; ++h) {
            const size_t base = size_t(b) * seq * d + size_t(h) * dh;
            // scores
            for (int t = 0; t < seq; ++t)
                for (int u = 0; u < seq; ++u) {
                    const S* qr = pq + base + size_t(t) * d;
                    const S* kr = pk + base + size_t(u) * d;
                    S acc = 0;
                    for (int e = 0; e < dh; ++e) acc += qr[e] * kr[e];
                    sc[size_t(t) * seq + u] = acc * iscale;
                }
            // row softmax
            S* pp = probs->data() + (size_t(b) * heads + h) * seq * seq;
            for (int t = 0; t < seq; ++t) {
                S* row = sc.data() + size_t(t) * seq;
                S mx = row[0];
                for (int u = 1; u < seq; ++u) mx = std::max(mx, row[u]);
                double z = 0.0;
                for (int u = 0; u < seq; ++u) z += std::exp(double(row[u] - mx));
                const double iz = 1.0 / z;
                for (int u = 0; u < seq; ++u)
                    pp[size_t(t) * seq + u] = S(std::exp(double(row[u] - mx)) * iz);
            }
            // mix
            for (int t = 0; t < seq; ++t) {
                S* orow = po + base + size_t(t) * d;
                for (int u = 0; u < seq; ++u) {
                    const S w = pp[size_t(t) * seq + u];
                    const S* vr = pv + base + size_t(u) * d;
                    for (int e = 0; e < dh; ++e) orow[e] += w * vr[e];
                }
            }
        }

    if (detail::want_grad<S>({&q, &k, &v})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {q.node(), k.node(), v.node()};
        NodeT<S>* o = on.get();
        NodeT<S>* qn = q.node().get(); NodeT<S>* kn = k.node().get(); NodeT<S>* vn = v.node().get();
        on->backward_fn = [o, qn, kn, vn, probs, batch, seq, heads, d, dh, iscale]() {
            if (qn->requires_grad) qn->ensure_grad();
            if (kn->requires_grad) kn->ensure_grad();
            if (vn->requires_grad) vn->ensure_grad();
            std::vector<S> dp(size_t(seq) * seq), ds(size_t(seq) * seq);
            for (int b = 0; b < batch; ++b)
                for (int h = 0; h < heads; ++h) {
                    const size_t base = size_t(b) * seq * d + size_t(h) * dh;
                    const S* pp = probs->data() + (size_t(b) * heads + h) * seq * seq;
                    // dV[u] += sum_t P[t,u] * dO[t]
                    if (vn->requires_grad)
                        for (int t = 0; t < seq; ++t) {
                            const S* grow = o->grad.data() + base + size_t(t) * d;
                            for (int u = 0; u < seq; ++u) {
                                const S w = pp[size_t(t) * seq + u];
                                if (w == S(0)) continue;
                                S* gv = vn->grad.data() + base + size_t(u) * d;
                                for (int e = 0; e < dh; ++e) gv[e] += w * grow[e];
                            }
                        }
                    // dP[t,u] = dO[t] . V[u]
                    for (int t = 0; t < seq; ++t)
                        for (int u = 0; u < seq; ++u) {
                            const S* grow = o->grad.data() + base + size_t(t) * d;
                            const S* vr = vn->value.data() + base + size_t(u) * d;
                            S acc = 0;
                            for (int e = 0; e < dh; ++e) acc += grow[e] * vr[e];
                            dp[size_t(t) * seq + u] = acc;
                        }
                    // dS = P o (dP - rowsum(dP o P))
                    for (int t = 0; t < seq; ++t) {
                        double rs = 0.0;
                        for (int u = 0; u < seq; ++u)
                            rs += double(dp[size_t(t) * seq + u]) * double(pp[size_t(t) * seq + u]);
                        for (int u = 0; u < seq; ++u)
                            ds[size_t(t) * seq + u] =
                                pp[size_t(t) * seq + u] * (dp[size_t(t) * seq + u] - S(rs));
                    }
                    // dQ[t] += iscale * sum_u dS[t,u] K[u]; dK[u] += iscale * sum_t dS[t,u] Q[t]
                    for (int t = 0; t < seq; ++t)
                        for (int u = 0; u < seq; ++u) {
                            const S g = ds[size_t(t) * seq + u] * iscale;
                            if (g == S(0)) continue;
                            if (qn->requires_grad) {
                                const S* kr = kn->value.data() + base + size_t(u) * d;
                                S* gq = qn->grad.data() + base + size_t(t) * d;
                                for (int e = 0; e < dh; ++e) gq[e] += g * kr[e];
                            }
                            if (kn->requires_grad) {
                                const S* qr = qn->value.data() + base + size_t(t) * d;
                                S* gk = kn->grad.data() + base + size_t(u) * d;
                                for (int e = 0; e < dh; ++e) gk[e] += g * qr[e];
                            }
                        }
                }
        };
    }
    return out;
}

// ---------------------------------------------------------------- sequence plumbing

// x[batch*seq, d] + tok[d] -> [batch*(seq+1), d] with tok as row 0 of each sequence.
template <class S>
TensorT<S> prepend_token(const TensorT<S>& x, const TensorT<S>& tok, int batch, int seq) {
    if (x.rank() != 2 || x.dim(0) != batch * seq)
        throw DimensionError("prepend_token: rows must equal batch*seq");
    const size_t d = size_t(x.dim(1));
    if (tok.numel() != d) throw DimensionError("prepend_token: token dim mismatch");
    auto out = TensorT<S>::zeros({batch * (seq + 1), int(d)});
    const S* px = x.data(); const S* pt = tok.data(); S* po = out.data();
    for (int b = 0; b < batch; ++b) {
        S* dst = po + size_t(b) * (seq + 1) * d;
        std::copy(pt, pt + d, dst);
        std::copy(px + size_t(b) * seq * d, px + size_t(b + 1) * seq * d, dst + d);
    }
    if (detail::want_grad<S>({&x, &tok})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node(), tok.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get(); NodeT<S>* tn = tok.node().get();
        on->backward_fn = [o, xn, tn, batch, seq, d]() {
            for (int b = 0; b < batch; ++b) {
                const S* g = o->grad.data() + size_t(b) * (seq + 1) * d;
                if (tn->requires_grad) {
                    tn->ensure_grad();
                    for (size_t j = 0; j < d; ++j) tn->grad[j] += g[j];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    S* gx = xn->grad.data() + size_t(b) * seq * d;
                    for (size_t i = 0; i < size_t(seq) * d; ++i) gx[i] += g[d + i];
                }
            }
        };
    }
    return out;
}

// Row 0 of every sequence: x[batch*seq, d] -> [batch, d].
template <class S>
TensorT<S> take_first_per_seq(const TensorT<S>& x, int batch, int seq) {
    if (x.rank() != 2 || x.dim(0) != batch * seq)
        throw DimensionError("take_first_per_seq: rows must equal batch*seq");
    const size_t d = size_t(x.dim(1));
    auto out = TensorT<S>::zeros({batch, int(d)});
    const S* px = x.data(); S* po = out.data();
    for (int b = 0; b < batch; ++b)
        std::copy(px + size_t(b) * seq * d, px + size_t(b) * seq * d + d, po + size_t(b) * d);
    if (detail::want_grad<S>({&x})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get();
        on->backward_fn = [o, xn, batch, seq, d]() {
            xn->ensure_grad();
            for (int b = 0; b < batch; ++b)
                for (size_t j = 0; j < d; ++j)
                    xn->grad[size_t(b) * seq * d + j] += o->grad[size_t(b) * d + j];
        };
    }
    return out;
}

// x[batch*seq, d] + table[seq, d], broadcast over batch.
template <class S>
TensorT<S> add_broadcast_seq(const TensorT<S>& x, const TensorT<S>& table, int batch) {
    if (x.rank() != 2 || table.rank() != 2 || x.dim(1) != table.dim(1) ||
        x.dim(0) != batch * table.dim(0))
        throw DimensionError("add_broadcast_seq: incompatible shapes");
    const int seq = table.dim(0);
    const size_t d = size_t(x.dim(1));
    auto out = TensorT<S>::zeros(x.shape());
    const S* px = x.data(); const S* pt = table.data(); S* po = out.data();
    for (int b = 0; b < batch; ++b)
        for (int t = 0; t < seq; ++t) {
            const size_t ro = (size_t(b) * seq + t) * d;
            for (size_t j = 0; j < d; ++j) po[ro + j] = px[ro + j] + pt[size_t(t) * d + j];
        }
    if (detail::want_grad<S>({&x, &table})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node(), table.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get(); NodeT<S>* tn = table.node().get();
        on->backward_fn = [o, xn, tn, batch, seq, d]() {
            if (xn->requires_grad) {
                xn->ensure_grad();
                const size_t n = size_t(batch) * seq * d;
                for (size_t i = 0; i < n; ++i) xn->grad[i] += o->grad[i];
            }
            if (tn->requires_grad) {
                tn->ensure_grad();
                for (int b = 0; b < batch; ++b)
                    for (int t = 0; t < seq; ++t) {
                        const size_t ro = (size_t(b) * seq + t) * d;
                        for (size_t j = 0; j < d; ++j)
                            tn->grad[size_t(t) * d + j] += o->grad[ro + j];
                    }
            }
        };
    }
    return out;
}

// e[batch, d] broadcast against table[seq, d] -> [batch*seq, d], entry = e_b + table_t.
template <class S>
TensorT<S> expand_latent(const TensorT<S>& e, const TensorT<S>& table) {
    if (e.rank() != 2 || table.rank() != 2 || e.dim(1) != table.dim(1))
        throw DimensionError("expand_latent: incompatible shapes");
    const int batch = e.dim(0), seq = table.dim(0);
    const size_t d = size_t(e.dim(1));
    auto out = TensorT<S>::zeros({batch * seq, int(d)});
    const S* pe = e.data(); const S* pt = table.data(); S* po = out.data();
    for (int b = 0; b < batch; ++b)
        for (int t = 0; t < seq; ++t) {
            const size_t ro = (size_t(b) * seq + t) * d;
            for (size_t j = 0; j < d; ++j) po[ro + j] = pe[size_t(b) * d + j] + pt[size_t(t) * d + j];
        }
    if (detail::want_grad<S>({&e, &table})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {e.node(), table.node()};
        NodeT<S>* o = on.get(); NodeT<S>* en = e.node().get(); NodeT<S>* tn = table.node().get();
        on->backward_fn = [o, en, tn, batch, seq, d]() {
            if (en->requires_grad) en->ensure_grad();
            if (tn->requires_grad) tn->ensure_grad();
            for (int b = 0; b < batch; ++b)
                for (int t = 0; t < seq; ++t) {
                    const size_t ro = (size_t(b) * seq + t) * d;
                    for (size_t j = 0; j < d; ++j) {
                        if (en->requires_grad) en->grad[size_t(b) * d + j] += o->grad[ro + j];
                        if (tn->requires_grad) tn->grad[size_t(t) * d + j] += o->grad[ro + j];
                    }
                }
        };
    }
    return out;
}

// Gather flat-vector slices into padded rows: v[batch, n] with an index map
// of seq*slice entries (negative = zero pad) -> [batch*seq, slice].
template <class S>
TensorT<S> gather_slices(const TensorT<S>& v, const std::vector<int32_t>& map, int seq, int slice) {
    if (v.rank() != 2) throw DimensionError("gather_slices: expected [batch, n]");
    if (map.size() != size_t(seq) * slice) throw DimensionError("gather_slices: map size mismatch");
    const int batch = v.dim(0);
    const int n = v.dim(1);
    for (int32_t idx : map)
        if (idx >= n) throw IndexError("gather_slices: map index out of range");
    auto out = TensorT<S>::zeros({batch * seq, slice});
    const S* pv = v.data(); S* po = out.data();
    for (int b = 0; b < batch; ++b) {
        const S* src = pv + size_t(b) * n;
        S* dst = po + size_t(b) * seq * slice;
        for (size_t i = 0; i < map.size(); ++i)
            if (map[i] >= 0) dst[i] = src[map[i]];
    }
    if (detail::want_grad<S>({&v})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {v.node()};
        NodeT<S>* o = on.get(); NodeT<S>* vn = v.node().get();
        auto m = std::make_shared<std::vector<int32_t>>(map);
        on->backward_fn = [o, vn, m, batch, seq, slice, n]() {
            vn->ensure_grad();
            for (int b = 0; b < batch; ++b) {
                const S* g = o->grad.data() + size_t(b) * seq * slice;
                S* gv = vn->grad.data() + size_t(b) * n;
                for (size_t i = 0; i < m->size(); ++i)
                    if ((*m)[i] >= 0) gv[(*m)[i]] += g[i];
            }
        };
    }
    return out;
}

// Inverse of gather_slices for an injective map: rows [batch*seq, slice]
// scatter back into [batch, n]; padded entries are dropped.
template <class S>
TensorT<S> scatter_slices(const TensorT<S>& y, const std::vector<int32_t>& map, int seq, int slice,
                          int n) {
    if (y.rank() != 2 || y.dim(1) != slice || y.dim(0) % seq != 0)
        throw DimensionError("scatter_slices: expected [batch*seq, slice]");
    if (map.size() != size_t(seq) * slice) throw DimensionError("scatter_slices: map size mismatch");
    const int batch = y.dim(0) / seq;
    for (int32_t idx : map)
        if (idx >= n) throw IndexError("scatter_slices: map index out of range");
    auto out = TensorT<S>::zeros({batch, n});
    const S* py = y.data(); S* po = out.data();
    for (int b = 0; b < batch; ++b) {
        const S* src = py + size_t(b) * seq * slice;
        S* dst = po + size_t(b) * n;
        for (size_t i = 0; i < map.size(); ++i)
            if (map[i] >= 0) dst[map[i]] += src[i];
    }
    if (detail::want_grad<S>({&y})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {y.node()};
        NodeT<S>* o = on.get(); NodeT<S>* yn = y.node().get();
        auto m = std::make_shared<std::vector<int32_t>>(map);
        on->backward_fn = [o, yn, m, batch, seq, slice, n]() {
            yn->ensure_grad();
            for (int b = 0; b < batch; ++b) {
                const S* g = o->grad.data() + size_t(b) * n;
                S* gy = yn->grad.data() + size_t(b) * seq * slice;
                for (size_t i = 0; i < m->size(); ++i)
                    if ((*m)[i] >= 0) gy[i] += g[(*m)[i]];
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------- contrastive helpers

// out[i] = dot(a_i, b_i) for rows of two [m,d] tensors.
template <class S>
TensorT<S> rowwise_dot(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "rowwise_dot");
    if (a.rank() != 2) throw DimensionError("rowwise_dot: expected [m,d]");
    const size_t m = size_t(a.dim(0)), d = size_t(a.dim(1));
    auto out = TensorT<S>::zeros({int(m)});
    const S* pa = a.data(); const S* pb = b.data(); S* po = out.data();
    for (size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < d; ++j) acc += double(pa[i * d + j]) * double(pb[i * d + j]);
        po[i] = S(acc);
    }
    if (detail::want_grad<S>({&a, &b})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {a.node(), b.node()};
        NodeT<S>* o = on.get(); NodeT<S>* an = a.node().get(); NodeT<S>* bn = b.node().get();
        on->backward_fn = [o, an, bn, m, d]() {
            if (an->requires_grad) an->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (size_t i = 0; i < m; ++i) {
                const S g = o->grad[i];
                for (size_t j = 0; j < d; ++j) {
                    if (an->requires_grad) an->grad[i * d + j] += g * bn->value[i * d + j];
                    if (bn->requires_grad) bn->grad[i * d + j] += g * an->value[i * d + j];
                }
            }
        };
    }
    return out;
}

// Per-row log(sum_{j != i} exp(x_ij)) over a square matrix.
template <class S>
TensorT<S> masked_row_logsumexp(const TensorT<S>& x) {
    if (x.rank() != 2 || x.dim(0) != x.dim(1))
        throw DimensionError("masked_row_logsumexp: expected square matrix");
    const size_t m = size_t(x.dim(0));
    if (m < 2) throw DimensionError("masked_row_logsumexp: needs at least two rows");
    auto out = TensorT<S>::zeros({int(m)});
    const S* px = x.data(); S* po = out.data();
    for (size_t i = 0; i < m; ++i) {
        const S* row = px + i * m;
        S mx = i == 0 ? row[1] : row[0];
        for (size_t j = 0; j < m; ++j)
            if (j != i) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (size_t j = 0; j < m; ++j)
            if (j != i) z += std::exp(double(row[j] - mx));
        po[i] = S(std::log(z) + double(mx));
    }
    if (detail::want_grad<S>({&x})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get();
        on->backward_fn = [o, xn, m]() {
            xn->ensure_grad();
            for (size_t i = 0; i < m; ++i) {
                const S g = o->grad[i];
                const S lse = o->value[i];
                for (size_t j = 0; j < m; ++j)
                    if (j != i)
                        xn->grad[i * m + j] += g * S(std::exp(double(xn->value[i * m + j] - lse)));
            }
        };
    }
    return out;
}

// out[i] = x[i, idx[i]].
template <class S>
TensorT<S> gather_per_row(const TensorT<S>& x, const std::vector<int>& idx) {
    if (x.rank() != 2) throw DimensionError("gather_per_row: expected [m,n]");
    const size_t m = size_t(x.dim(0)), n = size_t(x.dim(1));
    if (idx.size() != m) throw DimensionError("gather_per_row: index count mismatch");
    for (int j : idx)
        if (j < 0 || size_t(j) >= n) throw IndexError("gather_per_row: index out of range");
    auto out = TensorT<S>::zeros({int(m)});
    const S* px = x.data(); S* po = out.data();
    for (size_t i = 0; i < m; ++i) po[i] = px[i * n + size_t(idx[i])];
    if (detail::want_grad<S>({&x})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get();
        auto id = std::make_shared<std::vector<int>>(idx);
        on->backward_fn = [o, xn, id, m, n]() {
            xn->ensure_grad();
            for (size_t i = 0; i < m; ++i) xn->grad[i * n + size_t((*id)[i])] += o->grad[i];
        };
    }
    return out;
}

// Row subset (duplicates allowed): out[r] = x[idx[r]].
template <class S>
TensorT<S> take_rows(const TensorT<S>& x, const std::vector<int>& idx) {
    if (x.rank() != 2) throw DimensionError("take_rows: expected [m,n]");
    const size_t m = size_t(x.dim(0)), n = size_t(x.dim(1));
    for (int r : idx)
        if (r < 0 || size_t(r) >= m) throw IndexError("take_rows: row index out of range");
    auto out = TensorT<S>::zeros({int(idx.size()), int(n)});
    const S* px = x.data(); S* po = out.data();
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy(px + size_t(idx[i]) * n, px + (size_t(idx[i]) + 1) * n, po + i * n);
    if (detail::want_grad<S>({&x})) {
        auto on = out.node(); on->requires_grad = true;
        on->parents = {x.node()};
        NodeT<S>* o = on.get(); NodeT<S>* xn = x.node().get();
        auto id = std::make_shared<std::vector<int>>(idx);
        on->backward_fn = [o, xn, id, n]() {
            xn->ensure_grad();
            for (size_t i = 0; i < id->size(); ++i) {
                const size_t src = size_t((*id)[i]);
                for (size_t j = 0; j < n; ++j) xn->grad[src * n + j] += o->grad[i * n + j];
            }
        };
    }
    return out;
}

}  // namespace hz
