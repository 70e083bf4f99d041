#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "hz/ops.hpp"
#include "hz/optim.hpp"

using namespace hz;
using DT = TensorT<double>;

TEST_CASE("finite differences agree with reverse-mode gradients") {
    const auto reports = gradcheck::run_all(20240817, 20);
    CHECK(reports.size() >= 25);
    for (const auto& r : reports) {
        INFO(r.name, " worst rel err ", r.worst, " tol ", r.tolerance());
        CHECK(r.worst < r.tolerance());
    }
}

TEST_CASE("backward visits each node once and refuses a second pass") {
    DT x = DT::from({2}, {1.0, 2.0}, true);
    DT y = mul(x, x);
    DT loss = sum_all(y);
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK_THROWS_AS(loss.backward(), StateError);
}

TEST_CASE("diamond-shaped graphs accumulate gradients from both paths") {
    DT x = DT::from({1}, {3.0}, true);
    DT a = scale(x, 2.0);
    DT b = scale(x, 5.0);
    DT loss = sum_all(add(a, b));
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("grad mode guard detaches results") {
    DT x = DT::from({2}, {1.0, 2.0}, true);
    {
        NoGradGuard off;
        DT y = mul(x, x);
        CHECK_FALSE(y.requires_grad());
    }
    DT z = mul(x, x);
    CHECK(z.requires_grad());
}

TEST_CASE("softmax cross entropy closed form") {
    DT logits = DT::from({2, 3}, {0.0, 0.0, 0.0, 1.0, 2.0, 3.0}, false);
    DT loss = softmax_cross_entropy(logits, {0, 2});
    const double row0 = std::log(3.0);
    const double row1 = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
    CHECK(loss.item() == doctest::Approx(0.5 * (row0 + row1)).epsilon(1e-12));
}

TEST_CASE("layer norm closed form") {
    DT x = DT::from({1, 3}, {1.0, 2.0, 3.0}, false);
    DT g = DT::from({3}, {1.0, 1.0, 1.0}, false);
    DT b = DT::from({3}, {0.0, 0.0, 0.0}, false);
    DT y = layer_norm(x, g, b, 0.0);
    const double s = std::sqrt(2.0 / 3.0);
    CHECK(y.data()[0] == doctest::Approx(-1.0 / s).epsilon(1e-12));
    CHECK(y.data()[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y.data()[2] == doctest::Approx(1.0 / s).epsilon(1e-12));
}

TEST_CASE("masked row logsumexp excludes the diagonal") {
    DT x = DT::from({2, 2}, {100.0, 1.5, -0.5, 100.0}, false);
    DT y = masked_row_logsumexp(x);
    CHECK(y.data()[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(y.data()[1] == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("row normalization produces unit vectors") {
    DT x = DT::from({1, 2}, {3.0, 4.0}, false);
    DT y = l2_normalize_rows(x);
    CHECK(y.data()[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(y.data()[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("attention over a single position copies the value row") {
    DT q = DT::from({1, 4}, {0.3, -0.2, 0.9, 0.1}, false);
    DT k = DT::from({1, 4}, {0.5, 0.5, -0.5, 0.0}, false);
    DT v = DT::from({1, 4}, {1.0, 2.0, 3.0, 4.0}, false);
    DT y = attention_mix(q, k, v, 1, 1, 2);
    for (int i = 0; i < 4; ++i)
        CHECK(y.data()[i] == doctest::Approx(v.data()[i]).epsilon(1e-12));
}

TEST_CASE("slice gather and scatter round-trip with padding") {
    DT v = DT::from({2, 5}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, false);
    const std::vector<int32_t> map{0, 1, 2, 3, 4, -1};
    DT tok = gather_slices(v, map, 3, 2);
    CHECK(tok.shape()[0] == 6);
    CHECK(tok.shape()[1] == 2);
    CHECK(tok.data()[5 * 2 + 1] == 0.0);  // padded slot stays zero
    DT back = scatter_slices(tok, map, 3, 2, 5);
    for (size_t i = 0; i < v.numel(); ++i) CHECK(back.data()[i] == v.data()[i]);
}

TEST_CASE("duplicated row selection doubles the gradient") {
    DT x = DT::from({2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
    DT y = take_rows(x, {0, 0, 1});
    sum_all(y).backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(x.grad()[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(take_rows(x, {5}), IndexError);
}

TEST_CASE("dropout semantics") {
    DT x = DT::from({1, 100}, std::vector<double>(100, 1.0), false);
    RngStream rng = RngStream::root(9);
    DT eval = dropout(x, 0.5, false, rng);
    for (size_t i = 0; i < 100; ++i) CHECK(eval.data()[i] == 1.0);
    DT off = dropout(x, 0.0, true, rng);
    for (size_t i = 0; i < 100; ++i) CHECK(off.data()[i] == 1.0);
    DT on = dropout(x, 0.4, true, rng);
    int dropped = 0;
    for (size_t i = 0; i < 100; ++i) {
        const double v = on.data()[i];
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.6).epsilon(1e-12)));
        dropped += v == 0.0 ? 1 : 0;
    }
    CHECK(dropped > 20);
    CHECK(dropped < 60);
}

TEST_CASE("adam matches the hand recursion") {
    OptimConfig cfg;
    cfg.kind = OptimKind::adam;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;

    DT p = DT::from({2}, {1.0, -2.0}, true);
    std::vector<DT> params{p};
    OptimizerStateT<double> state;

    double hp[2] = {1.0, -2.0};
    double m[2] = {0, 0}, v[2] = {0, 0};
    const double grads[3][2] = {{0.5, -1.0}, {-0.25, 0.75}, {1.5, 0.1}};

    for (int step = 1; step <= 3; ++step) {
        p.zero_grad();
        p.grad()[0] = grads[step - 1][0];
        p.grad()[1] = grads[step - 1][1];
        optimizer_step(params, state, cfg);

        for (int i = 0; i < 2; ++i) {
            const double g = grads[step - 1][i] + cfg.weight_decay * hp[i];
            m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
            const double mh = m[i] / (1 - std::pow(cfg.beta1, step));
            const double vh = v[i] / (1 - std::pow(cfg.beta2, step));
            hp[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
            CHECK(p.data()[i] == doctest::Approx(hp[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("sgd matches the hand recursion") {
    OptimConfig cfg;
    cfg.kind = OptimKind::sgd;
    cfg.lr = 0.05;
    cfg.weight_decay = 0.1;

    DT p = DT::from({1}, {2.0}, true);
    std::vector<DT> params{p};
    OptimizerStateT<double> state;
    p.grad()[0] = 0.4;
    optimizer_step(params, state, cfg);
    CHECK(p.data()[0] == doctest::Approx(2.0 - 0.05 * (0.4 + 0.1 * 2.0)).epsilon(1e-12));
}

TEST_CASE("optimizer state is bound to its parameter list") {
    OptimConfig cfg;
    DT p = DT::from({2}, {1.0, 1.0}, true);
    std::vector<DT> params{p};
    OptimizerStateT<double> state;
    p.grad()[0] = 1.0;
    optimizer_step(params, state, cfg);

    DT q = DT::from({3}, {1.0, 1.0, 1.0}, true);
    std::vector<DT> other{q};
    q.grad()[0] = 1.0;
    CHECK_THROWS_AS(optimizer_step(other, state, cfg), StateError);
}

TEST_CASE("shape mismatches raise typed errors") {
    DT a = DT::zeros({2, 3});
    DT b = DT::zeros({3, 2});
    CHECK_THROWS_AS(add(a, b), DimensionError);
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
    CHECK_THROWS_AS(reshape(a, {4, 2}), DimensionError);
    CHECK_THROWS_AS(a.item(), DimensionError);
}
