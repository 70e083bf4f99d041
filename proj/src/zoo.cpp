#include "hz/zoo.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "hz/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hz {

ZooKind zoo_kind_from_string(const std::string& s) {
    if (s == "tetris-seed" || s == "tetris_seed") return ZooKind::tetris_seed;
    if (s == "tetris-hyp" || s == "tetris_hyp") return ZooKind::tetris_hyp;
    if (s == "mnist-seed" || s == "mnist_seed") return ZooKind::mnist_seed;
    if (s == "custom-grid" || s == "custom_grid") return ZooKind::custom_grid;
    throw ConfigError("unknown zoo kind: " + s);
}

const char* zoo_kind_name(ZooKind k) {
    switch (k) {
        case ZooKind::tetris_seed: return "tetris-seed";
        case ZooKind::tetris_hyp: return "tetris-hyp";
        case ZooKind::mnist_seed: return "mnist-seed";
        case ZooKind::custom_grid: return "custom-grid";
    }
    return "?";
}

std::vector<int> ZooManifest::model_ids_in_split(const std::string& split) const {
    std::vector<int> ids;
    for (const auto& m : models)
        if (m.split == split) ids.push_back(m.id);
    return ids;
}

std::string checkpoint_rel_path(int model_id, int epoch) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "checkpoints/m%04d_e%03d.hzw", model_id, epoch);
    return buf;
}

namespace {

Act act_from_string_local(const std::string& s) {
    if (s == "tanh") return Act::tanh_fn;
    if (s == "relu") return Act::relu;
    if (s == "sigmoid") return Act::sigmoid;
    if (s == "gelu") return Act::gelu;
    if (s == "identity") return Act::identity;
    throw ConfigError("unknown activation: " + s);
}

std::string hex64(uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", (unsigned long long)v);
    return buf;
}

uint64_t parse_hex64(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

json config_to_json(const TrainConfig& c) {
    return json{{"seed", c.seed},
                {"init", init_name(c.init)},
                {"activation", act_name(c.activation)},
                {"optimizer", optim_name(c.optimizer)},
                {"lr", c.lr},
                {"l2_reg", c.l2_reg},
                {"dropout", c.dropout},
                {"train_fraction", c.train_fraction},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.seed = j.at("seed").get<uint64_t>();
    c.init = init_from_string(j.at("init").get<std::string>());
    c.activation = act_from_string_local(j.at("activation").get<std::string>());
    c.optimizer = optim_from_string(j.at("optimizer").get<std::string>());
    c.lr = j.at("lr").get<double>();
    c.l2_reg = j.at("l2_reg").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.train_fraction = j.at("train_fraction").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    return c;
}

}  // namespace

void save_manifest(const ZooManifest& m, const std::string& dir) {
    json j;
    j["name"] = m.name;
    j["arch"] = m.arch_name;
    j["layout_hash"] = hex64(m.layout_hash);
    j["epochs"] = m.epochs;
    j["dataset"] = json{{"kind", m.dataset.kind},
                        {"seed", m.dataset.seed},
                        {"samples_per_class", m.dataset.samples_per_class},
                        {"pixel_noise", m.dataset.pixel_noise},
                        {"images", m.dataset.images_path},
                        {"labels", m.dataset.labels_path},
                        {"train_fraction", m.dataset.train_fraction},
                        {"fingerprint", hex64(m.dataset.fingerprint)}};
    json models = json::array();
    for (const auto& e : m.models) {
        json epochs = json::array();
        for (const auto& r : e.epochs)
            epochs.push_back(json{{"epoch", r.epoch},
                                  {"train_loss", r.train_loss},
                                  {"train_acc", r.train_acc},
                                  {"test_acc", r.test_acc},
                                  {"ggap", r.generalization_gap},
                                  {"f1", r.per_class_f1}});
        models.push_back(json{{"id", e.id},
                              {"split", e.split},
                              {"crashed", e.crashed},
                              {"crash_reason", e.crash_reason},
                              {"config", config_to_json(e.config)},
                              {"epochs", std::move(epochs)}});
    }
    j["models"] = std::move(models);
    fs::create_directories(dir);
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw StorageError("manifest: cannot write to " + dir);
    out << j.dump(1) << "\n";
}

ZooManifest load_manifest(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw StorageError("manifest: cannot open " + dir + "/manifest.json");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("manifest: invalid json in " + dir + ": " + e.what());
    }
    try {
        ZooManifest m;
        m.name = j.at("name").get<std::string>();
        m.arch_name = j.at("arch").get<std::string>();
        m.layout_hash = parse_hex64(j.at("layout_hash").get<std::string>());
        m.epochs = j.at("epochs").get<int>();
        const json& d = j.at("dataset");
        m.dataset.kind = d.at("kind").get<std::string>();
        m.dataset.seed = d.at("seed").get<uint64_t>();
        m.dataset.samples_per_class = d.at("samples_per_class").get<int>();
        m.dataset.pixel_noise = d.at("pixel_noise").get<double>();
        m.dataset.images_path = d.at("images").get<std::string>();
        m.dataset.labels_path = d.at("labels").get<std::string>();
        m.dataset.train_fraction = d.at("train_fraction").get<double>();
        m.dataset.fingerprint = parse_hex64(d.at("fingerprint").get<std::string>());
        for (const json& e : j.at("models")) {
            ZooModelEntry entry;
            entry.id = e.at("id").get<int>();
            entry.split = e.at("split").get<std::string>();
            entry.crashed = e.at("crashed").get<bool>();
            entry.crash_reason = e.at("crash_reason").get<std::string>();
            entry.config = config_from_json(e.at("config"));
            for (const json& r : e.at("epochs")) {
                EpochRecord rec;
                rec.epoch = r.at("epoch").get<int>();
                rec.train_loss = r.at("train_loss").get<double>();
                rec.train_acc = r.at("train_acc").get<double>();
                rec.test_acc = r.at("test_acc").get<double>();
                rec.generalization_gap = r.at("ggap").get<double>();
                rec.per_class_f1 = r.at("f1").get<std::vector<double>>();
                entry.epochs.push_back(std::move(rec));
            }
            m.models.push_back(std::move(entry));
        }
        return m;
    } catch (const json::exception& e) {
        throw ConsistencyError("manifest: missing or mistyped field in " + dir + ": " + e.what());
    }
}

ImageDataset dataset_from_spec(const DatasetSpec& spec) {
    ImageDataset d;
    if (spec.kind == "tetris") {
        d = generate_tetris(spec.seed, spec.samples_per_class, spec.pixel_noise);
    } else if (spec.kind == "idx") {
        d = load_idx_pair(spec.images_path, spec.labels_path);
    } else {
        throw ConfigError("dataset_from_spec: unknown kind " + spec.kind);
    }
    if (spec.fingerprint != 0 && dataset_fingerprint(d) != spec.fingerprint)
        throw ConsistencyError("dataset_from_spec: fingerprint mismatch (dataset changed?)");
    return d;
}

ArchSpec arch_from_manifest(const ZooManifest& m, Act activation) {
    if (m.arch_name == "tetris_ffn") return build_ffn_tetris(activation);
    if (m.arch_name == "mnist_cnn") return build_cnn_mnist(activation);
    throw ConsistencyError("manifest: unknown arch " + m.arch_name);
}

ArchSpec arch_from_manifest(const ZooManifest& m) {
    return arch_from_manifest(m, Act::tanh_fn);
}

std::vector<ZooSample> load_split_checkpoints(const ZooManifest& m, const std::string& dir,
                                              const std::string& split) {
    std::vector<ZooSample> out;
    for (const auto& e : m.models) {
        if (e.split != split) continue;
        for (const auto& r : e.epochs) {
            ZooSample s;
            s.model_id = e.id;
            s.epoch = r.epoch;
            s.weights = load_checkpoint(dir + "/" + checkpoint_rel_path(e.id, r.epoch),
                                        m.layout_hash);
            out.push_back(std::move(s));
        }
    }
    return out;
}

namespace {

std::vector<TrainConfig> build_configs(const ZooGenConfig& cfg) {
    std::vector<TrainConfig> configs;
    auto base_for_kind = [&]() {
        TrainConfig t;
        t.optimizer = OptimKind::adam;
        t.activation = Act::tanh_fn;
        t.init = InitKind::uniform;
        t.train_fraction = cfg.dataset.train_fraction;
        t.epochs = cfg.epochs;
        switch (cfg.kind) {
            case ZooKind::tetris_seed:
                t.lr = 3e-5;
                t.batch_size = 4;
                break;
            case ZooKind::tetris_hyp:
                t.lr = 3e-5;
                t.batch_size = 4;
                break;
            case ZooKind::mnist_seed:
                t.lr = 3e-4;
                t.batch_size = 32;
                break;
            case ZooKind::custom_grid:
                t.lr = 3e-5;
                t.batch_size = 32;
                break;
        }
        return t;
    };

    TrainConfig base = base_for_kind();
    if (cfg.kind == ZooKind::tetris_seed || cfg.kind == ZooKind::mnist_seed) {
        for (int i = 0; i < cfg.scale; ++i) {
            TrainConfig t = base;
            t.seed = cfg.seed + uint64_t(i);
            configs.push_back(t);
        }
        return configs;
    }

    std::vector<std::string> acts = cfg.grid_activations;
    std::vector<std::string> inits = cfg.grid_inits;
    std::vector<double> lrs = cfg.grid_lrs;
    std::vector<double> l2s = cfg.grid_l2s;
    std::vector<double> drops = cfg.grid_dropouts;
    std::vector<double> tfs = cfg.grid_train_fractions;
    int seeds_per_cell = cfg.grid_seeds_per_cell;
    if (cfg.kind == ZooKind::tetris_hyp) {
        acts = {"tanh", "relu"};
        inits = {"uniform", "normal", "kaiming_uniform", "kaiming_normal", "xavier_uniform",
                 "xavier_normal"};
        lrs = {1e-3, 1e-4, 1e-5};
        l2s.clear();
        drops.clear();
        tfs.clear();
        const int cells = int(acts.size() * inits.size() * lrs.size());
        seeds_per_cell = (cfg.scale + cells - 1) / cells;
    }
    if (acts.empty()) acts = {act_name(base.activation)};
    if (inits.empty()) inits = {init_name(base.init)};
    if (lrs.empty()) lrs = {base.lr};
    if (l2s.empty()) l2s = {base.l2_reg};
    if (drops.empty()) drops = {base.dropout};
    if (tfs.empty()) tfs = {base.train_fraction};
    if (seeds_per_cell <= 0) seeds_per_cell = 1;

    uint64_t next_seed = cfg.seed;
    for (const auto& a : acts)
        for (const auto& ini : inits)
            for (double lr : lrs)
                for (double l2 : l2s)
                    for (double dr : drops)
                        for (double tf : tfs)
                            for (int s = 0; s < seeds_per_cell; ++s) {
                                TrainConfig t = base;
                                t.activation = act_from_string_local(a);
                                t.init = init_from_string(ini);
                                t.lr = lr;
                                t.l2_reg = l2;
                                t.dropout = dr;
                                t.train_fraction = tf;
                                t.seed = next_seed++;
                                configs.push_back(t);
                            }
    return configs;
}

}  // namespace

ZooManifest generate_zoo(const ZooGenConfig& cfg, const std::string& out_dir) {
    if (cfg.scale <= 0) throw ConfigError("generate_zoo: scale must be positive");
    if (cfg.epochs <= 0) throw ConfigError("generate_zoo: epochs must be positive");

    ZooManifest m;
    m.name = zoo_kind_name(cfg.kind);
    m.arch_name = (cfg.kind == ZooKind::mnist_seed) ? "mnist_cnn" : "tetris_ffn";
    m.epochs = cfg.epochs;
    m.dataset = cfg.dataset;
    if (cfg.kind == ZooKind::mnist_seed && cfg.dataset.kind != "idx")
        throw ConfigError("generate_zoo: mnist-seed needs an idx dataset (--idx-images/--idx-labels)");

    ImageDataset full = dataset_from_spec(m.dataset);
    m.dataset.fingerprint = dataset_fingerprint(full);

    // One dataset split per distinct train fraction, shared by all models.
    auto configs = build_configs(cfg);
    ArchSpec probe_arch = arch_from_manifest(m);
    LayerLayout layout = derive_layout(probe_arch);
    m.layout_hash = layout.hash;

    fs::create_directories(out_dir + "/checkpoints");

    struct SplitPair {
        double tf;
        ImageDataset train, test;
    };
    std::vector<SplitPair> splits;
    auto split_for = [&](double tf) -> const SplitPair& {
        for (const auto& s : splits)
            if (s.tf == tf) return s;
        auto [tr, te] = split_dataset(full, tf, m.dataset.seed);
        splits.push_back({tf, std::move(tr), std::move(te)});
        return splits.back();
    };
    for (const auto& c : configs) split_for(c.train_fraction);

    m.models.resize(configs.size());
    std::atomic<size_t> next{0};
    const int jobs = std::max(1, cfg.jobs);
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= configs.size()) return;
            const TrainConfig& tc = configs[i];
            const SplitPair* sp = nullptr;
            for (const auto& s : splits)
                if (s.tf == tc.train_fraction) sp = &s;
            ArchSpec arch = arch_from_manifest(m, tc.activation);
            WeightVector init = init_weights(arch, layout, tc.init, tc.seed);
            const int id = int(i);
            auto outcome = train_model(
                arch, layout, sp->train, sp->test, tc, init,
                [&](int epoch, const WeightVector& w, const EpochRecord&) {
                    WeightVector tagged = w;
                    tagged.model_id = id;
                    save_checkpoint(out_dir + "/" + checkpoint_rel_path(id, epoch), tagged);
                });
            ZooModelEntry e;
            e.id = id;
            e.config = tc;
            e.crashed = outcome.crashed;
            e.crash_reason = outcome.crash_reason;
            e.epochs = std::move(outcome.epochs);
            m.models[i] = std::move(e);
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Model-level 70/15/15 split over the survivors.
    std::vector<size_t> alive;
    for (size_t i = 0; i < m.models.size(); ++i)
        if (!m.models[i].crashed) alive.push_back(i);
        else m.models[i].split = "excluded";
    RngStream rng = RngStream::root(cfg.seed).derive("zoo_split");
    for (size_t i = alive.size(); i > 1; --i) std::swap(alive[i - 1], alive[rng.below(i)]);
    const size_t ntr = size_t(double(alive.size()) * 0.7);
    const size_t nva = size_t(double(alive.size()) * 0.15);
    for (size_t i = 0; i < alive.size(); ++i)
        m.models[alive[i]].split = i < ntr ? "train" : (i < ntr + nva ? "val" : "test");

    save_manifest(m, out_dir);
    return m;
}

}  // namespace hz
