#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "hz/model.hpp"
#include "hz/zoo.hpp"

using namespace hz;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("hz_zoo_test_" + std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

ZooGenConfig tiny_config(uint64_t seed = 1) {
    ZooGenConfig cfg;
    cfg.kind = ZooKind::tetris_seed;
    cfg.scale = 12;
    cfg.epochs = 4;
    cfg.seed = seed;
    cfg.dataset.samples_per_class = 40;
    cfg.jobs = 1;
    return cfg;
}

}  // namespace

TEST_CASE("a generated population is complete and split into disjoint parts") {
    const fs::path dir = temp_dir();
    const ZooManifest m = generate_zoo(tiny_config(), dir.string());

    CHECK(m.arch_name == "tetris_ffn");
    CHECK(m.epochs == 4);
    REQUIRE(m.models.size() == 12);

    int usable = 0;
    for (const auto& e : m.models) {
        if (e.crashed) {
            CHECK(e.split == "excluded");
            continue;
        }
        usable++;
        REQUIRE(e.epochs.size() == 4);
        for (int ep = 1; ep <= 4; ++ep) {
            const fs::path ck = dir / checkpoint_rel_path(e.id, ep);
            INFO("missing ", ck.string());
            CHECK(fs::exists(ck));
        }
    }

    const auto tr = m.model_ids_in_split("train");
    const auto va = m.model_ids_in_split("val");
    const auto te = m.model_ids_in_split("test");
    CHECK(int(tr.size() + va.size() + te.size()) == usable);
    CHECK(int(tr.size()) == int(0.7 * usable));
    CHECK(int(va.size()) == int(0.15 * usable));
    std::set<int> all(tr.begin(), tr.end());
    all.insert(va.begin(), va.end());
    all.insert(te.begin(), te.end());
    CHECK(all.size() == size_t(usable));  // disjoint
}

TEST_CASE("generation is reproducible byte for byte") {
    const fs::path a = temp_dir();
    const fs::path b = temp_dir();
    generate_zoo(tiny_config(7), a.string());
    generate_zoo(tiny_config(7), b.string());

    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(a / "checkpoints")) {
        const fs::path peer = b / "checkpoints" / entry.path().filename();
        REQUIRE(fs::exists(peer));
        CHECK(slurp(entry.path()) == slurp(peer));
        compared++;
    }
    CHECK(compared >= 4);

    const fs::path c = temp_dir();
    generate_zoo(tiny_config(8), c.string());
    CHECK(slurp(a / "manifest.json") != slurp(c / "manifest.json"));
}

TEST_CASE("manifest round-trips through disk") {
    const fs::path dir = temp_dir();
    const ZooManifest m = generate_zoo(tiny_config(3), dir.string());
    const ZooManifest r = load_manifest(dir.string());

    CHECK(r.name == m.name);
    CHECK(r.arch_name == m.arch_name);
    CHECK(r.layout_hash == m.layout_hash);
    CHECK(r.epochs == m.epochs);
    CHECK(r.dataset.fingerprint == m.dataset.fingerprint);
    REQUIRE(r.models.size() == m.models.size());
    for (size_t i = 0; i < m.models.size(); ++i) {
        CHECK(r.models[i].id == m.models[i].id);
        CHECK(r.models[i].split == m.models[i].split);
        CHECK(r.models[i].crashed == m.models[i].crashed);
        CHECK(r.models[i].config.seed == m.models[i].config.seed);
        CHECK(r.models[i].config.lr == m.models[i].config.lr);
        CHECK(r.models[i].config.activation == m.models[i].config.activation);
        REQUIRE(r.models[i].epochs.size() == m.models[i].epochs.size());
        for (size_t ep = 0; ep < m.models[i].epochs.size(); ++ep) {
            CHECK(r.models[i].epochs[ep].test_acc ==
                  doctest::Approx(m.models[i].epochs[ep].test_acc).epsilon(1e-12));
            CHECK(r.models[i].epochs[ep].train_loss ==
                  doctest::Approx(m.models[i].epochs[ep].train_loss).epsilon(1e-12));
        }
    }

    SUBCASE("missing manifest") {
        CHECK_THROWS_AS(load_manifest((dir / "nothere").string()), DataError);
    }
    SUBCASE("rejects damaged json") {
        std::ofstream((dir / "manifest.json")) << "{ not json";
        CHECK_THROWS_AS(load_manifest(dir.string()), FormatError);
    }
}

TEST_CASE("the recorded dataset spec rebuilds the identical dataset") {
    const fs::path dir = temp_dir();
    const ZooManifest m = generate_zoo(tiny_config(5), dir.string());
    const ImageDataset d = dataset_from_spec(m.dataset);
    CHECK(dataset_fingerprint(d) == m.dataset.fingerprint);

    DatasetSpec tampered = m.dataset;
    tampered.seed += 1;
    CHECK_THROWS_AS(dataset_from_spec(tampered), ConsistencyError);
}

TEST_CASE("split checkpoints come back in id-then-epoch order") {
    const fs::path dir = temp_dir();
    const ZooManifest m = generate_zoo(tiny_config(2), dir.string());
    const auto samples = load_split_checkpoints(m, dir.string(), "train");
    REQUIRE(!samples.empty());
    for (size_t i = 1; i < samples.size(); ++i) {
        const bool ordered = samples[i - 1].model_id < samples[i].model_id ||
                             (samples[i - 1].model_id == samples[i].model_id &&
                              samples[i - 1].epoch < samples[i].epoch);
        CHECK(ordered);
    }
    for (const auto& s : samples) {
        CHECK(s.weights.data.size() == 100);
        CHECK(s.weights.layout_hash == m.layout_hash);
    }
    CHECK(samples.size() == m.model_ids_in_split("train").size() * 4);
}

TEST_CASE("seed variation is the only difference within a seed population") {
    const fs::path dir = temp_dir();
    const ZooManifest m = generate_zoo(tiny_config(4), dir.string());
    std::set<uint64_t> seeds;
    for (const auto& e : m.models) {
        seeds.insert(e.config.seed);
        CHECK(e.config.lr == 3e-5);
        CHECK(e.config.batch_size == 4);
        CHECK(e.config.activation == Act::tanh_fn);
        CHECK(e.config.optimizer == OptimKind::adam);
    }
    CHECK(seeds.size() == m.models.size());
}

TEST_CASE("hyperparameter populations enumerate the full grid") {
    ZooGenConfig cfg;
    cfg.kind = ZooKind::tetris_hyp;
    cfg.scale = 36;  // exactly one seed per cell
    cfg.epochs = 1;
    cfg.dataset.samples_per_class = 10;
    cfg.jobs = 1;

    const fs::path dir = temp_dir();
    const ZooManifest m = generate_zoo(cfg, dir.string());
    REQUIRE(m.models.size() == 36);

    std::set<std::tuple<int, int, double>> cells;
    for (const auto& e : m.models)
        cells.insert({int(e.config.activation), int(e.config.init), e.config.lr});
    CHECK(cells.size() == 36);  // 2 activations x 6 inits x 3 learning rates

    std::set<double> lrs;
    std::set<int> acts, inits;
    for (const auto& e : m.models) {
        lrs.insert(e.config.lr);
        acts.insert(int(e.config.activation));
        inits.insert(int(e.config.init));
    }
    CHECK(lrs == std::set<double>{1e-3, 1e-4, 1e-5});
    CHECK(acts.size() == 2);
    CHECK(inits.size() == 6);
}

TEST_CASE("grid scale rounds up to whole cells") {
    ZooGenConfig cfg;
    cfg.kind = ZooKind::tetris_hyp;
    cfg.scale = 40;  // more than one grid -> 2 seeds per cell -> 72 models
    cfg.epochs = 1;
    cfg.dataset.samples_per_class = 5;
    cfg.jobs = 1;
    const fs::path dir = temp_dir();
    const ZooManifest m = generate_zoo(cfg, dir.string());
    CHECK(m.models.size() == 72);
}

TEST_CASE("custom grids take the cartesian product of the given axes") {
    ZooGenConfig cfg;
    cfg.kind = ZooKind::custom_grid;
    cfg.epochs = 1;
    cfg.dataset.samples_per_class = 5;
    cfg.jobs = 1;
    cfg.grid_activations = {"tanh", "relu"};
    cfg.grid_lrs = {1e-3, 1e-4};
    cfg.grid_dropouts = {0.0, 0.3};
    cfg.grid_seeds_per_cell = 2;

    const fs::path dir = temp_dir();
    const ZooManifest m = generate_zoo(cfg, dir.string());
    REQUIRE(m.models.size() == 16);  // 2 * 2 * 2 * 2 seeds

    std::set<uint64_t> seeds;
    std::set<std::tuple<int, double, double, uint64_t>> combos;
    for (const auto& e : m.models) {
        seeds.insert(e.config.seed);
        combos.insert({int(e.config.activation), e.config.lr, e.config.dropout, e.config.seed});
    }
    CHECK(seeds.size() == 16);  // every model gets its own seed
    CHECK(combos.size() == 16);
}

TEST_CASE("training moves accuracy above chance on an easy configuration") {
    const ImageDataset data = generate_tetris(3, 100, 0.0);
    auto [train_set, test_set] = split_dataset(data, 0.7, 3);

    const ArchSpec arch = build_ffn_tetris(Act::tanh_fn);
    const LayerLayout layout = derive_layout(arch);

    TrainConfig tc;
    tc.seed = 5;
    tc.lr = 3e-3;  // deliberately hot so a few epochs are enough
    tc.batch_size = 8;
    tc.epochs = 20;

    const WeightVector w0 = init_weights(arch, layout, InitKind::uniform, tc.seed);
    const TrainOutcome out = train_model(arch, layout, train_set, test_set, tc, w0);
    REQUIRE(!out.crashed);
    REQUIRE(out.epochs.size() == 20);
    CHECK(out.epochs.back().train_acc > 0.6);
    CHECK(out.epochs.back().test_acc > 0.5);
    CHECK(out.epochs.back().train_loss < out.epochs.front().train_loss);

    // per-class f1 is populated and bounded
    for (double f1 : out.epochs.back().per_class_f1) {
        CHECK(f1 >= 0.0);
        CHECK(f1 <= 1.0);
    }
}

TEST_CASE("malformed generation configs are rejected") {
    ZooGenConfig cfg = tiny_config();
    const fs::path dir = temp_dir();

    SUBCASE("no models") {
        cfg.scale = 0;
        CHECK_THROWS_AS(generate_zoo(cfg, dir.string()), ConfigError);
    }
    SUBCASE("no epochs") {
        cfg.epochs = 0;
        CHECK_THROWS_AS(generate_zoo(cfg, dir.string()), ConfigError);
    }
    SUBCASE("image population without image files") {
        cfg.kind = ZooKind::mnist_seed;
        cfg.dataset.kind = "tetris";
        CHECK_THROWS_AS(generate_zoo(cfg, dir.string()), ConfigError);
    }
}
