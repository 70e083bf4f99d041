#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hz/errors.hpp"

namespace hz {

template <class S>
struct NodeT {
    std::vector<int> shape;
    std::vector<S> value;
    std::vector<S> grad;  // sized lazily by ensure_grad
    bool requires_grad = false;
    bool backward_done = false;  // set on the root once its tape has run
    std::vector<std::shared_ptr<NodeT>> parents;
    std::function<void()> backward_fn;

    size_t numel() const {
        size_t n = 1;
        for (int d : shape) n *= size_t(d);
        return n;
    }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    }
};

// Whether newly built ops record parents/backward closures. Evaluation paths
// switch this off so forward passes neither retain activations nor build tape.
inline bool& grad_mode_flag() {
    thread_local bool on = true;
    return on;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev; }
};

template <class S>
class TensorT {
public:
    TensorT() = default;

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
        TensorT t;
        t.n_ = std::make_shared<NodeT<S>>();
        t.n_->shape = std::move(shape);
        check_shape(t.n_->shape);
        t.n_->value.assign(t.n_->numel(), S(0));
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static TensorT from(std::vector<int> shape, std::vector<S> data, bool requires_grad = false) {
        TensorT t = zeros(std::move(shape), requires_grad);
        if (data.size() != t.numel())
            throw DimensionError("tensor: data size " + std::to_string(data.size()) +
                                 " does not match shape volume " + std::to_string(t.numel()));
        t.n_->value = std::move(data);
        return t;
    }

    static TensorT scalar(S v) { return from({1}, {v}); }

    bool defined() const { return bool(n_); }
    const std::vector<int>& shape() const { return req()->shape; }
    int dim(int i) const { return req()->shape.at(size_t(i)); }
    size_t rank() const { return req()->shape.size(); }
    size_t numel() const { return req()->numel(); }

    S* data() { return req()->value.data(); }
    const S* data() const { return req()->value.data(); }
    std::vector<S>& values() { return req()->value; }
    const std::vector<S>& values() const { return req()->value; }

    bool requires_grad() const { return req()->requires_grad; }
    void set_requires_grad(bool rg) {
        if (rg && req()->backward_fn)
            throw StateError("set_requires_grad: only leaf tensors may be toggled");
        req()->requires_grad = rg;
    }

    std::vector<S>& grad() {
        req()->ensure_grad();
        return req()->grad;
    }
    void zero_grad() {
        req()->ensure_grad();
        std::fill(req()->grad.begin(), req()->grad.end(), S(0));
    }

    S item() const {
        if (numel() != 1) throw DimensionError("item: tensor is not scalar");
        return req()->value[0];
    }

    // Runs the recorded tape once in reverse topological order. Each node is
    // visited exactly once; calling backward a second time on the same root
    // without rebuilding the graph is a state error.
    void backward() const {
        NodeT<S>* root = req().get();
        if (root->numel() != 1) throw DimensionError("backward: loss must be scalar");
        if (root->backward_done) throw StateError("backward: tape already consumed for this root");
        std::vector<NodeT<S>*> order;
        build_tape(root, order);
        root->ensure_grad();
        root->grad[0] = S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward_fn) (*it)->backward_fn();
        root->backward_done = true;
    }

    std::shared_ptr<NodeT<S>> node() const { return n_; }

    static TensorT wrap(std::shared_ptr<NodeT<S>> n) {
        TensorT t;
        t.n_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<NodeT<S>> n_;

    const std::shared_ptr<NodeT<S>>& req() const {
        if (!n_) throw StateError("tensor: used before initialization");
        return n_;
    }

    static void check_shape(const std::vector<int>& s) {
        if (s.empty()) throw DimensionError("tensor: rank-0 shapes are not supported");
        for (int d : s)
            if (d <= 0) throw DimensionError("tensor: nonpositive dimension");
    }

    static void build_tape(NodeT<S>* root, std::vector<NodeT<S>*>& order) {
        // Iterative post-order DFS: parents land before children in `order`.
        std::unordered_set<NodeT<S>*> seen;
        std::vector<std::pair<NodeT<S>*, size_t>> stack;
        stack.push_back({root, 0});
        seen.insert(root);
        while (!stack.empty()) {
            auto& [node, idx] = stack.back();
            if (idx < node->parents.size()) {
                NodeT<S>* p = node->parents[idx++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }
};

using Tensor = TensorT<float>;

template <class S>
std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline std::string shape_str(const std::vector<int>& s) { return shape_str<float>(s); }

}  // namespace hz
