#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "hz/probe.hpp"
#include "hz/rng.hpp"
#include "hz/zoo.hpp"

using namespace hz;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("hz_probe_test_" + std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

FeatureMatrix random_features(int rows, int cols, RngStream& rng, double lo = -1.0,
                              double hi = 1.0) {
    FeatureMatrix x(rows, cols);
    for (auto& v : x.a) v = rng.uniform(lo, hi);
    return x;
}

// Coordinate-descent solver for the same objective as the closed form:
// sum of squared residuals plus alpha * ||coef||^2, intercept unpenalized.
RidgeModel ridge_coordinate_descent(const FeatureMatrix& x, const std::vector<double>& y,
                                    double alpha, int sweeps = 4000) {
    const int n = x.rows, d = x.cols;
    std::vector<double> c(size_t(d), 0.0);
    double b = 0.0;
    std::vector<double> resid(y);  // y - b - x*c
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        double mean_r = 0.0;
        for (double r : resid) mean_r += r;
        mean_r /= double(n);
        b += mean_r;
        for (auto& r : resid) r -= mean_r;
        for (int j = 0; j < d; ++j) {
            double num = 0.0, den = alpha;
            for (int i = 0; i < n; ++i) {
                num += x.at(i, j) * (resid[size_t(i)] + x.at(i, j) * c[size_t(j)]);
                den += x.at(i, j) * x.at(i, j);
            }
            const double cj = num / den;
            const double delta = cj - c[size_t(j)];
            if (delta != 0.0)
                for (int i = 0; i < n; ++i) resid[size_t(i)] -= delta * x.at(i, j);
            c[size_t(j)] = cj;
        }
    }
    RidgeModel m;
    m.coef = std::move(c);
    m.intercept = b;
    m.alpha = alpha;
    return m;
}

// Tau-b recomputed from first principles: pairwise counts, tie-corrected
// denominator. Written to produce the identical final expression so the
// comparison can be exact.
double kendall_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    long long nc = 0, nd = 0, ta = 0, tb = 0;
    for (size_t i = 0; i + 1 < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            const int sa = a[i] < a[j] ? -1 : (a[i] > a[j] ? 1 : 0);
            const int sb = b[i] < b[j] ? -1 : (b[i] > b[j] ? 1 : 0);
            if (sa == 0) ++ta;
            if (sb == 0) ++tb;
            if (sa == 0 || sb == 0) continue;
            if (sa == sb) ++nc;
            else ++nd;
        }
    const long long n0 = (long long)(n) * (long long)(n - 1) / 2;
    const double den = std::sqrt(double(n0 - ta)) * std::sqrt(double(n0 - tb));
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return double(nc - nd) / den;
}

}  // namespace

TEST_CASE("closed-form ridge agrees with a coordinate-descent oracle") {
    RngStream rng = RngStream::root(11);
    for (int inst = 0; inst < 10; ++inst) {
        const int n = 30 + int(rng.below(30));
        const int d = 3 + int(rng.below(5));
        FeatureMatrix x = random_features(n, d, rng, -2.0, 2.0);
        std::vector<double> truth(static_cast<size_t>(d), 0.0);
        for (auto& v : truth) v = rng.uniform(-3.0, 3.0);
        const double bias = rng.uniform(-2.0, 2.0);
        std::vector<double> y(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) {
            double acc = bias;
            for (int j = 0; j < d; ++j) acc += x.at(i, j) * truth[size_t(j)];
            y[size_t(i)] = acc + rng.normal(0.0, 0.3);
        }
        const double alpha = std::pow(10.0, rng.uniform(-3.0, 1.0));

        const RidgeModel closed = ridge_fit_alpha(x, y, alpha);
        const RidgeModel iter = ridge_coordinate_descent(x, y, alpha);
        for (int j = 0; j < d; ++j)
            CHECK(std::fabs(closed.coef[size_t(j)] - iter.coef[size_t(j)]) < 1e-4);
        CHECK(std::fabs(closed.intercept - iter.intercept) < 1e-4);
    }
}

TEST_CASE("ridge respects affine changes of the target") {
    RngStream rng = RngStream::root(12);
    FeatureMatrix x = random_features(40, 4, rng);
    std::vector<double> y(40);
    for (auto& v : y) v = rng.uniform(-1.0, 1.0);
    std::vector<double> y2(40);
    for (size_t i = 0; i < y.size(); ++i) y2[i] = 2.0 * y[i] + 3.0;

    const RidgeModel a = ridge_fit_alpha(x, y, 0.5);
    const RidgeModel b = ridge_fit_alpha(x, y2, 0.5);
    for (int j = 0; j < 4; ++j)
        CHECK(b.coef[size_t(j)] == doctest::Approx(2.0 * a.coef[size_t(j)]).epsilon(1e-10));
    CHECK(b.intercept == doctest::Approx(2.0 * a.intercept + 3.0).epsilon(1e-10));

    SUBCASE("constant targets land entirely in the unpenalized intercept") {
        std::vector<double> c(40, 7.25);
        const RidgeModel m = ridge_fit_alpha(x, c, 1e6);
        for (int j = 0; j < 4; ++j) CHECK(std::fabs(m.coef[size_t(j)]) < 1e-8);
        CHECK(m.intercept == doctest::Approx(7.25).epsilon(1e-10));
    }
}

TEST_CASE("ridge grid selection and input validation") {
    RngStream rng = RngStream::root(13);
    FeatureMatrix x = random_features(30, 3, rng);
    std::vector<double> y(30);
    for (int i = 0; i < 30; ++i) y[size_t(i)] = x.at(i, 0) + 0.1 * rng.normal(0.0, 1.0);
    FeatureMatrix xv = random_features(10, 3, rng);
    std::vector<double> yv(10);
    for (int i = 0; i < 10; ++i) yv[size_t(i)] = xv.at(i, 0);

    const auto grid = default_alpha_grid();
    REQUIRE(grid.size() == 13);
    CHECK(grid.front() == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(grid.back() == doctest::Approx(1e3).epsilon(1e-12));
    for (size_t i = 2; i < grid.size(); ++i)
        CHECK(grid[i] / grid[i - 1] == doctest::Approx(grid[1] / grid[0]).epsilon(1e-9));

    const RidgeModel m = ridge_fit(x, y, xv, yv);
    CHECK(std::count(grid.begin(), grid.end(), m.alpha) == 1);
    CHECK(r2_score(ridge_predict(m, xv), yv) > 0.9);

    CHECK_THROWS_AS(ridge_fit_alpha(x, y, 0.0), ConfigError);
    CHECK_THROWS_AS(ridge_fit_alpha(x, std::vector<double>(5, 0.0), 1.0), LengthError);
    CHECK_THROWS_AS(ridge_predict(m, random_features(4, 7, rng)), LengthError);
    CHECK_THROWS_AS(ridge_fit(x, y, FeatureMatrix(), {}, grid), DataError);
}

TEST_CASE("coefficient-of-determination identities") {
    std::vector<double> t{1.0, 2.0, 3.0, 4.5, -1.0};

    CHECK(r2_score(t, t) == doctest::Approx(1.0).epsilon(1e-15));

    double mean = 0.0;
    for (double v : t) mean += v;
    mean /= double(t.size());
    std::vector<double> m(t.size(), mean);
    CHECK(r2_score(m, t) == doctest::Approx(0.0).epsilon(1e-15));

    CHECK(std::isnan(r2_score(t, std::vector<double>(t.size(), 2.0))));
    CHECK_THROWS_AS(r2_score(t, std::vector<double>(3, 0.0)), LengthError);
    CHECK_THROWS_AS(r2_score({1.0}, {1.0}), LengthError);
}

TEST_CASE("rank correlation matches its oracle on tied data") {
    RngStream rng = RngStream::root(14);
    for (int inst = 0; inst < 100; ++inst) {
        const size_t n = 2 + rng.below(49);
        std::vector<double> a(n), b(n);
        // draw from a small integer set so ties are common
        for (auto& v : a) v = double(rng.below(6));
        for (auto& v : b) v = double(rng.below(6));
        const double got = kendall_tau(a, b);
        const double want = kendall_oracle(a, b);
        if (std::isnan(want))
            CHECK(std::isnan(got));
        else
            CHECK(got == want);  // identical integer counts, identical expression
    }
}

TEST_CASE("rank correlation identities and monotone invariance") {
    std::vector<double> a{0.3, 1.2, 2.2, 3.1, 4.9, 5.0};
    std::vector<double> up(a), down(a);
    std::reverse(down.begin(), down.end());

    CHECK(kendall_tau(a, up) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(kendall_tau(a, down) == doctest::Approx(-1.0).epsilon(1e-15));

    // strictly monotone transforms change nothing
    RngStream rng = RngStream::root(15);
    std::vector<double> x(25), y(25);
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    for (auto& v : y) v = rng.uniform(-2.0, 2.0);
    const double base = kendall_tau(x, y);
    std::vector<double> ex(x), cube(y);
    for (auto& v : ex) v = std::exp(v);
    for (auto& v : cube) v = v * v * v;
    CHECK(kendall_tau(ex, y) == base);
    CHECK(kendall_tau(x, cube) == base);
    CHECK(kendall_tau(ex, cube) == base);

    CHECK(std::isnan(kendall_tau(std::vector<double>(4, 1.0), y = {1, 2, 3, 4})));
    CHECK_THROWS_AS(kendall_tau({1.0}, {1.0}), LengthError);
    CHECK_THROWS_AS(kendall_tau({1.0, 2.0}, {1.0}), LengthError);
}

TEST_CASE("softmax probe separates a toy problem") {
    RngStream rng = RngStream::root(16);
    const int per = 30;
    const double centers[3][2] = {{3.0, 0.0}, {-3.0, 3.0}, {0.0, -3.0}};
    auto make = [&](int count) {
        FeatureMatrix x(count * 3, 2);
        std::vector<int> y(size_t(count) * 3);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < count; ++i) {
                const int r = c * count + i;
                x.at(r, 0) = centers[c][0] + rng.normal(0.0, 0.4);
                x.at(r, 1) = centers[c][1] + rng.normal(0.0, 0.4);
                y[size_t(r)] = c;
            }
        return std::make_pair(x, y);
    };
    auto [xtr, ytr] = make(per);
    auto [xva, yva] = make(8);
    auto [xte, yte] = make(12);

    const SoftmaxProbe probe = softmax_probe_fit(xtr, ytr, xva, yva, 3, 21);
    CHECK(accuracy_score(softmax_predict(probe, xte), yte) >= 0.95);

    // deterministic per seed
    const SoftmaxProbe again = softmax_probe_fit(xtr, ytr, xva, yva, 3, 21);
    CHECK(probe.w == again.w);
    CHECK(probe.b == again.b);

    CHECK_THROWS_AS(softmax_probe_fit(xtr, std::vector<int>(xtr.rows, 1), xva, yva, 3, 1),
                    DataError);  // one class only
    auto bad = ytr;
    bad[0] = 9;
    CHECK_THROWS_AS(softmax_probe_fit(xtr, bad, xva, yva, 3, 1), IndexError);
    CHECK_THROWS_AS(softmax_predict(probe, random_features(3, 5, rng)), LengthError);
}

TEST_CASE("eigensolver on symmetric matrices") {
    SUBCASE("2x2 with known spectrum") {
        std::vector<double> a{2.0, 1.0, 1.0, 2.0};
        std::vector<double> vals, vecs;
        jacobi_eigen(a, 2, vals, vecs);
        CHECK(vals[0] == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(vals[1] == doctest::Approx(1.0).epsilon(1e-12));
        const double inv = 1.0 / std::sqrt(2.0);
        CHECK(std::fabs(vecs[0 * 2 + 0] * inv + vecs[1 * 2 + 0] * inv) ==
              doctest::Approx(1.0).epsilon(1e-10));  // |<v0, [1,1]/sqrt2>| = 1
    }
    SUBCASE("random instances: residuals, orthonormality, order, trace") {
        RngStream rng = RngStream::root(17);
        for (int inst = 0; inst < 5; ++inst) {
            const int n = 8;
            std::vector<double> a(size_t(n) * n);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j)
                    a[size_t(i) * n + j] = a[size_t(j) * n + i] = rng.uniform(-1.0, 1.0);
            std::vector<double> orig(a);
            double trace = 0.0;
            for (int i = 0; i < n; ++i) trace += a[size_t(i) * n + i];

            std::vector<double> vals, vecs;
            jacobi_eigen(a, n, vals, vecs);

            double val_sum = 0.0;
            for (int k = 0; k < n; ++k) {
                val_sum += vals[size_t(k)];
                if (k > 0) CHECK(vals[size_t(k)] <= vals[size_t(k) - 1] + 1e-12);
                // residual ||A v - lambda v||
                double res = 0.0;
                for (int i = 0; i < n; ++i) {
                    double av = 0.0;
                    for (int j = 0; j < n; ++j)
                        av += orig[size_t(i) * n + j] * vecs[size_t(j) * n + k];
                    const double r = av - vals[size_t(k)] * vecs[size_t(i) * n + k];
                    res += r * r;
                }
                CHECK(std::sqrt(res) < 1e-8);
                for (int k2 = 0; k2 <= k; ++k2) {
                    double dot = 0.0;
                    for (int i = 0; i < n; ++i)
                        dot += vecs[size_t(i) * n + k] * vecs[size_t(i) * n + k2];
                    CHECK(std::fabs(dot - (k2 == k ? 1.0 : 0.0)) < 1e-10);
                }
            }
            CHECK(val_sum == doctest::Approx(trace).epsilon(1e-10));
        }
    }
    SUBCASE("size validation") {
        std::vector<double> bad{1.0, 2.0, 3.0};
        std::vector<double> vals, vecs;
        CHECK_THROWS_AS(jacobi_eigen(bad, 2, vals, vecs), DimensionError);
    }
}

TEST_CASE("linear feature compression recovers a planted direction") {
    RngStream rng = RngStream::root(18);
    const int d = 6;
    std::vector<double> u(static_cast<size_t>(d), 0.0);
    double norm = 0.0;
    for (auto& v : u) {
        v = rng.normal(0.0, 1.0);
        norm += v * v;
    }
    for (auto& v : u) v /= std::sqrt(norm);

    FeatureMatrix x(200, d);
    for (int r = 0; r < 200; ++r) {
        const double t = rng.uniform(-4.0, 4.0);
        for (int c = 0; c < d; ++c) x.at(r, c) = t * u[size_t(c)] + rng.normal(0.0, 0.05);
    }
    const PcaModel m = fit_pca(x, PcaKind::linear, 2);
    double cos_sim = 0.0, comp_norm = 0.0;
    for (int c = 0; c < d; ++c) {
        cos_sim += m.comps[size_t(c)] * u[size_t(c)];
        comp_norm += m.comps[size_t(c)] * m.comps[size_t(c)];
    }
    CHECK(std::fabs(cos_sim) > 0.99);
    CHECK(comp_norm == doctest::Approx(1.0).epsilon(1e-9));

    // leading projection carries the most variance
    const FeatureMatrix z = pca_transform(m, x);
    double v0 = 0.0, v1 = 0.0, m0 = 0.0, m1 = 0.0;
    for (int r = 0; r < z.rows; ++r) {
        m0 += z.at(r, 0);
        m1 += z.at(r, 1);
    }
    m0 /= z.rows;
    m1 /= z.rows;
    for (int r = 0; r < z.rows; ++r) {
        v0 += (z.at(r, 0) - m0) * (z.at(r, 0) - m0);
        v1 += (z.at(r, 1) - m1) * (z.at(r, 1) - m1);
    }
    CHECK(v0 > v1);
}

TEST_CASE("wide matrices take the dual route and match the direct one") {
    RngStream rng = RngStream::root(19);
    // 10 rows, 24 columns: fewer samples than features
    FeatureMatrix wide = random_features(10, 24, rng);
    const PcaModel m = fit_pca(wide, PcaKind::linear, 3);
    const FeatureMatrix z = pca_transform(m, wide);
    REQUIRE(z.rows == 10);
    REQUIRE(z.cols == 3);

    for (int k = 0; k < 3; ++k) {
        double n2 = 0.0;
        for (int c = 0; c < 24; ++c) n2 += m.comps[size_t(k) * 24 + c] * m.comps[size_t(k) * 24 + c];
        CHECK(n2 == doctest::Approx(1.0).epsilon(1e-9));
    }

    // projections onto eigenvector k must have variance lambda_k / n and be
    // uncorrelated across components
    for (int k = 0; k < 3; ++k)
        for (int k2 = k + 1; k2 < 3; ++k2) {
            double dot = 0.0;
            for (int r = 0; r < 10; ++r) dot += z.at(r, k) * z.at(r, k2);
            CHECK(std::fabs(dot) < 1e-8);
        }

    CHECK_THROWS_AS(fit_pca(wide, PcaKind::linear, 11), ConfigError);
    CHECK_THROWS_AS(fit_pca(wide, PcaKind::linear, 0), ConfigError);
    CHECK_THROWS_AS(fit_pca(FeatureMatrix(1, 3), PcaKind::linear, 1), DataError);
}

TEST_CASE("kernelized compression is deterministic and bounded") {
    RngStream rng = RngStream::root(20);
    FeatureMatrix x = random_features(40, 6, rng);

    for (PcaKind kind : {PcaKind::cosine, PcaKind::rbf}) {
        const PcaModel a = fit_pca(x, kind, 4, 0.0, 1000, 3);
        const PcaModel b = fit_pca(x, kind, 4, 0.0, 1000, 3);
        const FeatureMatrix za = pca_transform(a, x);
        const FeatureMatrix zb = pca_transform(b, x);
        REQUIRE(za.cols == 4);
        for (size_t i = 0; i < za.a.size(); ++i) CHECK(za.a[i] == zb.a[i]);

        // out-of-sample points transform without error and stay finite
        FeatureMatrix fresh = random_features(7, 6, rng);
        const FeatureMatrix zf = pca_transform(a, fresh);
        for (double v : zf.a) CHECK(std::isfinite(v));
    }

    SUBCASE("subsampling caps the stored fit rows") {
        const PcaModel capped = fit_pca(x, PcaKind::rbf, 4, 0.0, 16, 5);
        CHECK(capped.train_x.rows == 16);
        const PcaModel c2 = fit_pca(x, PcaKind::rbf, 4, 0.0, 16, 5);
        CHECK(capped.train_x.a == c2.train_x.a);
    }
    SUBCASE("dim cannot exceed the kernel rank bound") {
        CHECK_THROWS_AS(fit_pca(x, PcaKind::rbf, 17, 0.0, 16, 5), ConfigError);
    }
    SUBCASE("rbf gamma defaults to one over the width") {
        const PcaModel m = fit_pca(x, PcaKind::rbf, 2);
        CHECK(m.gamma == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    }
}

TEST_CASE("probe suite runs end to end on a small population") {
    const fs::path dir = temp_dir();
    ZooGenConfig cfg;
    cfg.kind = ZooKind::tetris_seed;
    cfg.scale = 12;
    cfg.epochs = 4;
    cfg.seed = 2;
    cfg.dataset.samples_per_class = 40;
    cfg.jobs = 1;
    const ZooManifest m = generate_zoo(cfg, dir.string());

    ProbeOptions opt;
    opt.seed = 4;

    SUBCASE("regression cells are well formed for every source") {
        // untrained encoder: the suite only needs an encoding function
        EncoderConfig enc;
        enc.blocks = 1;
        enc.token_dim = 16;
        enc.ffn_dim = 32;
        enc.latent_dim = 10;
        enc.dropout = 0.0;
        const LayerLayout layout = derive_layout(build_ffn_tetris());
        HyperRepModel model(enc, layout);

        int usable = 0;
        for (const auto& e : m.models)
            if (!e.crashed) ++usable;

        const std::vector<SourceKind> sources{SourceKind::raw_w, SourceKind::sw,
                                              SourceKind::pca_linear, SourceKind::hyperrep};
        const auto cells =
            run_probe_suite(m, dir.string(), sources, {"eph", "ggap", "f1_0"}, &model, opt);
        REQUIRE(cells.size() == 12);
        const auto grid = default_alpha_grid();
        for (const auto& c : cells) {
            CHECK(c.metric == "r2");
            CHECK(std::isfinite(c.value));
            CHECK(c.value <= 1.0);
            CHECK(std::isfinite(c.tau));
            CHECK(c.n_train > 0);
            CHECK(c.n_val > 0);
            CHECK(c.n_test > 0);
            CHECK(c.n_train + c.n_val + c.n_test == usable * 4);
            CHECK(std::count(grid.begin(), grid.end(), c.alpha) == 1);
        }
        CHECK(cells[0].source == "raw_w");
        CHECK(cells[0].task == "eph");
        CHECK(cells[3].source == "sw");
    }

    SUBCASE("hyperrep source demands an encoder and a matching layout") {
        CHECK_THROWS_AS(
            run_probe_suite(m, dir.string(), {SourceKind::hyperrep}, {"eph"}, nullptr, opt),
            ConfigError);
        EncoderConfig enc;
        enc.blocks = 1;
        enc.token_dim = 16;
        enc.ffn_dim = 32;
        enc.latent_dim = 40;
        enc.dropout = 0.0;
        const LayerLayout cnn = derive_layout(build_cnn_mnist());
        HyperRepModel wrong(enc, cnn);
        CHECK_THROWS_AS(
            run_probe_suite(m, dir.string(), {SourceKind::hyperrep}, {"eph"}, &wrong, opt),
            ConsistencyError);
    }

    SUBCASE("single-class classification tasks are rejected") {
        // tetris-seed fixes the activation, so 'act' has one class
        CHECK_THROWS_AS(run_probe_suite(m, dir.string(), {SourceKind::sw}, {"act"}, nullptr, opt),
                        DataError);
    }

    SUBCASE("unknown tasks and empty requests fail fast") {
        CHECK_THROWS_AS(task_from_string("speed"), ConfigError);
        CHECK_THROWS_AS(run_probe_suite(m, dir.string(), {}, {"eph"}, nullptr, opt), ConfigError);
        CHECK_THROWS_AS(source_from_string("zip"), ConfigError);
    }

    SUBCASE("rank transfer through a shared encoder reproduces itself in-distribution") {
        EncoderConfig enc;
        enc.blocks = 1;
        enc.token_dim = 16;
        enc.ffn_dim = 32;
        enc.latent_dim = 10;
        enc.dropout = 0.0;
        const LayerLayout layout = derive_layout(build_ffn_tetris());
        HyperRepModel model(enc, layout);

        const auto ood = ood_transfer(model, m, dir.string(), m, dir.string(), {"eph", "acc"});
        REQUIRE(ood.size() == 2);

        const auto cells = run_probe_suite(m, dir.string(), {SourceKind::hyperrep},
                                           {"eph", "acc"}, &model, opt);
        REQUIRE(cells.size() == 2);
        for (size_t i = 0; i < 2; ++i) {
            CHECK(std::fabs(ood[i].tau - cells[i].tau) < 1e-12);
            CHECK(std::fabs(ood[i].r2 - cells[i].value) < 1e-12);
            CHECK(ood[i].n == cells[i].n_test);
        }

        SUBCASE("classification tasks are rejected for transfer") {
            CHECK_THROWS_AS(ood_transfer(model, m, dir.string(), m, dir.string(), {"act"}),
                            ConfigError);
        }
        SUBCASE("mismatched layouts are rejected") {
            ZooManifest other = m;
            other.layout_hash ^= 1;
            CHECK_THROWS_AS(ood_transfer(model, m, dir.string(), other, dir.string(), {"eph"}),
                            LayoutError);
            CHECK_THROWS_AS(ood_transfer(model, other, dir.string(), other, dir.string(), {"eph"}),
                            LayoutError);
        }
    }
}
