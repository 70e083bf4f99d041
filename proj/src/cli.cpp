#include "hz/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hz/augment.hpp"
#include "hz/encoder.hpp"
#include "hz/errors.hpp"
#include "hz/model.hpp"
#include "hz/probe.hpp"
#include "hz/report.hpp"
#include "hz/ssl.hpp"
#include "hz/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hz {
namespace {

// ------------------------------------------------------------- utilities

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw StorageError("cannot write " + path.string());
    f << text;
    if (!f) throw StorageError("short write to " + path.string());
}

// The log file is the only artifact that carries wall-clock timestamps;
// everything else a run writes must be byte-identical across reruns.
void log_line(const fs::path& out_dir, const std::string& msg) {
    std::ofstream f(out_dir / "run.log", std::ios::app);
    if (!f) return;
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
    f << buf << "Z " << msg << "\n";
}

void prepare_out_dir(const std::string& out, bool force) {
    if (out.empty()) throw ConfigError("--out must not be empty");
    fs::path p(out);
    std::error_code ec;
    if (fs::exists(p, ec)) {
        if (!fs::is_directory(p, ec))
            throw ConfigError("output path '" + out + "' exists and is not a directory");
        bool has_payload = false;
        for (const auto& entry : fs::directory_iterator(p, ec)) {
            if (entry.path().filename() == "run.log") continue;
            has_payload = true;
            break;
        }
        if (has_payload && !force)
            throw ConfigError("output directory '" + out +
                              "' is not empty; pass --force to write into it anyway");
    } else {
        fs::create_directories(p, ec);
        if (ec) throw StorageError("cannot create output directory '" + out + "': " + ec.message());
    }
}

// Values from a --config JSON file fill in options the command line left at
// their defaults; explicit flags always win. Keys are the long option names
// without the leading dashes.
struct Overlay {
    CLI::App* cmd = nullptr;
    json j;
    bool active = false;
    std::set<std::string> seen;

    void load(CLI::App* c, const std::string& path) {
        cmd = c;
        if (path.empty()) return;
        std::ifstream f(path);
        if (!f) throw DataError("cannot open config file '" + path + "'");
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw FormatError("config file '" + path + "': " + e.what());
        }
        if (!j.is_object()) throw FormatError("config file '" + path + "': expected a JSON object");
        active = true;
    }

    template <class T>
    void get(const std::string& flag, T& var) {
        if (!active) return;
        const std::string key = flag.substr(2);
        seen.insert(key);
        if (!j.contains(key)) return;
        const CLI::Option* op = cmd->get_option_no_throw(flag);
        if (op != nullptr && op->count() > 0) return;  // command line wins
        try {
            var = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }

    // Every key must correspond to a real option so typos do not pass silently.
    void finish() const {
        if (!active) return;
        for (const auto& [key, value] : j.items()) {
            (void)value;
            if (!seen.count(key)) throw ConfigError("config file has unknown key '" + key + "'");
        }
    }
};

json augment_to_json(const AugmentConfig& a) {
    return json{{"permutation", a.use_permutation}, {"erase", a.use_erase},
                {"noise", a.use_noise},             {"perm-count", a.permutation_count},
                {"erase-prob", a.erase_prob},       {"erase-low", a.erase_low},
                {"erase-high", a.erase_high},       {"noise-std", a.noise_std}};
}

void add_augment_flags(CLI::App* cmd, AugmentConfig& a) {
    cmd->add_flag("--permutation,!--no-permutation", a.use_permutation,
                  "permute hidden units as an augmentation");
    cmd->add_flag("--erase,!--no-erase", a.use_erase, "zero a random contiguous run");
    cmd->add_flag("--noise,!--no-noise", a.use_noise, "add gaussian noise");
    cmd->add_option("--perm-count", a.permutation_count, "permutations drawn per layer")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--erase-prob", a.erase_prob, "probability a view gets erased")
        ->capture_default_str();
    cmd->add_option("--erase-low", a.erase_low, "minimum erased fraction")->capture_default_str();
    cmd->add_option("--erase-high", a.erase_high, "maximum erased fraction")->capture_default_str();
    cmd->add_option("--noise-std", a.noise_std, "noise standard deviation")->capture_default_str();
}

void overlay_augment(Overlay& ov, AugmentConfig& a) {
    ov.get("--permutation", a.use_permutation);
    ov.get("--erase", a.use_erase);
    ov.get("--noise", a.use_noise);
    ov.get("--perm-count", a.permutation_count);
    ov.get("--erase-prob", a.erase_prob);
    ov.get("--erase-low", a.erase_low);
    ov.get("--erase-high", a.erase_high);
    ov.get("--noise-std", a.noise_std);
}

double l2_distance(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

std::string fmt_g(double v, int prec = 6) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

// --------------------------------------------------------- zoo generate

struct ZooGenArgs {
    std::string config_path;
    ZooGenConfig cfg;
    std::string kind = "tetris_seed";
    std::string out;
    bool force = false;
    bool strict = false;
};

int cmd_zoo_generate(CLI::App* cmd, ZooGenArgs& a) {
    Overlay ov;
    ov.load(cmd, a.config_path);
    ov.get("--kind", a.kind);
    ov.get("--models", a.cfg.scale);
    ov.get("--epochs", a.cfg.epochs);
    ov.get("--seed", a.cfg.seed);
    ov.get("--jobs", a.cfg.jobs);
    ov.get("--dataset", a.cfg.dataset.kind);
    ov.get("--dataset-seed", a.cfg.dataset.seed);
    ov.get("--samples-per-class", a.cfg.dataset.samples_per_class);
    ov.get("--pixel-noise", a.cfg.dataset.pixel_noise);
    ov.get("--images", a.cfg.dataset.images_path);
    ov.get("--labels", a.cfg.dataset.labels_path);
    ov.get("--train-fraction", a.cfg.dataset.train_fraction);
    ov.get("--grid-activations", a.cfg.grid_activations);
    ov.get("--grid-inits", a.cfg.grid_inits);
    ov.get("--grid-lrs", a.cfg.grid_lrs);
    ov.get("--grid-l2s", a.cfg.grid_l2s);
    ov.get("--grid-dropouts", a.cfg.grid_dropouts);
    ov.get("--grid-train-fractions", a.cfg.grid_train_fractions);
    ov.get("--seeds-per-cell", a.cfg.grid_seeds_per_cell);
    ov.get("--out", a.out);
    ov.finish();

    a.cfg.kind = zoo_kind_from_string(a.kind);
    if (a.strict) a.cfg.jobs = 1;
    if (a.cfg.jobs < 1) throw ConfigError("--jobs must be at least 1");
    if (a.out.empty()) throw ConfigError("zoo generate needs --out");

    prepare_out_dir(a.out, a.force);
    log_line(a.out, "zoo generate start");

    const json resolved = {
        {"command", "zoo generate"},
        {"kind", zoo_kind_name(a.cfg.kind)},
        {"models", a.cfg.scale},
        {"epochs", a.cfg.epochs},
        {"seed", a.cfg.seed},
        {"jobs", a.cfg.jobs},
        {"dataset",
         {{"kind", a.cfg.dataset.kind},
          {"seed", a.cfg.dataset.seed},
          {"samples-per-class", a.cfg.dataset.samples_per_class},
          {"pixel-noise", a.cfg.dataset.pixel_noise},
          {"images", a.cfg.dataset.images_path},
          {"labels", a.cfg.dataset.labels_path},
          {"train-fraction", a.cfg.dataset.train_fraction}}},
        {"grid",
         {{"activations", a.cfg.grid_activations},
          {"inits", a.cfg.grid_inits},
          {"lrs", a.cfg.grid_lrs},
          {"l2s", a.cfg.grid_l2s},
          {"dropouts", a.cfg.grid_dropouts},
          {"train-fractions", a.cfg.grid_train_fractions},
          {"seeds-per-cell", a.cfg.grid_seeds_per_cell}}},
    };
    write_text_file(fs::path(a.out) / "config.json", resolved.dump(1) + "\n");

    const ZooManifest m = generate_zoo(a.cfg, a.out);

    int crashed = 0;
    for (const auto& e : m.models) crashed += e.crashed ? 1 : 0;
    std::cout << "zoo '" << m.name << "' (" << m.arch_name << "): " << m.models.size()
              << " models, " << crashed << " crashed\n";
    for (const char* split : {"train", "val", "test"})
        std::cout << "  " << split << ": " << m.model_ids_in_split(split).size() << " models\n";
    std::cout << "  checkpoints per model: " << m.epochs << "\n";
    std::cout << "wrote " << a.out << "\n";
    log_line(a.out, "zoo generate done");
    return 0;
}

// -------------------------------------------------------- augment verify

struct AugVerifyArgs {
    std::string config_path;
    std::string zoo;
    int samples = 20;
    int perms = 10;
    int inputs = 100;
    int epochs = 10;
    double tolerance = 1e-5;
    double ratio_limit = 0.05;
    double acc_limit_pp = 0.5;
    uint64_t seed = 7;
};

int cmd_augment_verify(CLI::App* cmd, AugVerifyArgs& a) {
    Overlay ov;
    ov.load(cmd, a.config_path);
    ov.get("--zoo", a.zoo);
    ov.get("--samples", a.samples);
    ov.get("--perms", a.perms);
    ov.get("--inputs", a.inputs);
    ov.get("--epochs", a.epochs);
    ov.get("--tolerance", a.tolerance);
    ov.get("--ratio-limit", a.ratio_limit);
    ov.get("--acc-limit", a.acc_limit_pp);
    ov.get("--seed", a.seed);
    ov.finish();
    if (a.zoo.empty()) throw ConfigError("augment verify needs --zoo");
    if (a.samples < 1 || a.perms < 1 || a.inputs < 1 || a.epochs < 1)
        throw ConfigError("--samples, --perms, --inputs and --epochs must be positive");

    const ZooManifest m = load_manifest(a.zoo);
    const ImageDataset data = dataset_from_spec(m.dataset);
    const LayerLayout layout = derive_layout(arch_from_manifest(m));
    std::map<int, TrainConfig> config_of;
    for (const auto& e : m.models)
        if (!e.crashed) config_of[e.id] = e.config;
    if (config_of.empty()) throw DataError("zoo has no usable models");

    std::vector<ZooSample> pool;
    for (const char* split : {"train", "val", "test"}) {
        auto part = load_split_checkpoints(m, a.zoo, split);
        pool.insert(pool.end(), part.begin(), part.end());
    }
    if (pool.empty()) throw DataError("zoo has no checkpoints");

    const PermutationSet pset = sample_permutation_set(layout, a.perms, a.seed);
    if (pset.layers.empty()) throw ConfigError("layout has no permutable layer to verify");

    RngStream pick = RngStream::root(a.seed).derive("verify_pick");
    const int n_inputs = int(std::min<size_t>(size_t(a.inputs), data.size()));
    const int n_samples = int(std::min<size_t>(size_t(a.samples), pool.size()));

    // Forward equivalence: permuted weights must produce the same logits.
    double worst_fwd = 0.0;
    {
        NoGradGuard eval_guard;
        RngStream dummy = RngStream::root(0);
        for (int si = 0; si < n_samples; ++si) {
            const ZooSample& zs = pool[pick.below(uint64_t(pool.size()))];
            const ArchSpec arch = arch_from_manifest(m, config_of.at(zs.model_id).activation);
            const ModelParams base = params_from_vector(layout, zs.weights, false);
            const Tensor ref =
                forward_logits(arch, base, data.pixels.data(), n_inputs, false, 0.0, dummy);
            for (int pi = 0; pi < a.perms; ++pi) {
                std::vector<SegmentPerm> chosen;
                for (const auto& lp : pset.layers)
                    chosen.push_back({lp.segment, lp.perms[size_t(pi) % lp.perms.size()]});
                const WeightVector wp = apply_permutation(zs.weights, layout, chosen);
                const ModelParams pp = params_from_vector(layout, wp, false);
                const Tensor out =
                    forward_logits(arch, pp, data.pixels.data(), n_inputs, false, 0.0, dummy);
                const auto& rv = ref.values();
                const auto& ov_ = out.values();
                for (size_t k = 0; k < rv.size(); ++k)
                    worst_fwd = std::max(worst_fwd, std::abs(double(rv[k]) - double(ov_[k])));
            }
        }
    }
    std::cout << "forward equivalence: max |logit difference| = " << fmt_g(worst_fwd) << " over "
              << n_samples << " checkpoints x " << a.perms << " permutations ("
              << n_inputs << " inputs)\n";

    // Backward equivalence: training from a permuted start must track the
    // permuted trajectory of the original run.
    TrainConfig tc = config_of.begin()->second;
    for (const auto& [id, c] : config_of)
        if (c.dropout == 0.0) {
            tc = c;
            break;
        }
    if (tc.dropout != 0.0) {
        // dropout masks are tied to unit positions, which breaks the exact
        // symmetry; switch it off for the trajectory check
        std::cout << "note: zoo configs all use dropout, disabling it for the trajectory test\n";
        tc.dropout = 0.0;
    }
    tc.epochs = a.epochs;

    std::vector<SegmentPerm> traj_perm;
    for (const auto& lp : pset.layers) {
        size_t idx = 0;
        for (size_t k = 0; k < lp.perms.size(); ++k) {
            std::vector<int> identity(lp.perms[k].size());
            for (size_t u = 0; u < identity.size(); ++u) identity[u] = int(u);
            if (lp.perms[k] != identity) {
                idx = k;
                break;
            }
        }
        traj_perm.push_back({lp.segment, lp.perms[idx]});
    }

    const ArchSpec arch = arch_from_manifest(m, tc.activation);
    auto [train_set, test_set] = split_dataset(data, tc.train_fraction, m.dataset.seed);
    const WeightVector a0 = init_weights(arch, layout, tc.init, tc.seed);
    const WeightVector b0 = apply_permutation(a0, layout, traj_perm);

    std::vector<WeightVector> traj_a, traj_b;
    std::vector<double> acc_a, acc_b;
    auto cap_a = [&](int, const WeightVector& w, const EpochRecord& r) {
        traj_a.push_back(w);
        acc_a.push_back(r.test_acc);
    };
    auto cap_b = [&](int, const WeightVector& w, const EpochRecord& r) {
        traj_b.push_back(w);
        acc_b.push_back(r.test_acc);
    };
    const TrainOutcome ra = train_model(arch, layout, train_set, test_set, tc, a0, cap_a);
    const TrainOutcome rb = train_model(arch, layout, train_set, test_set, tc, b0, cap_b);
    if (ra.crashed || rb.crashed)
        throw VerificationError("trajectory run crashed: " +
                                (ra.crashed ? ra.crash_reason : rb.crash_reason));
    if (traj_a.size() != traj_b.size() || traj_a.empty())
        throw VerificationError("trajectory runs produced different epoch counts");

    double worst_ratio = 0.0, worst_acc_pp = 0.0;
    std::cout << "trajectory (" << traj_a.size() << " epochs):\n";
    std::cout << "  epoch  |perm(A)-B|   |A-B|       ratio     acc diff (pp)\n";
    for (size_t t = 0; t < traj_a.size(); ++t) {
        const WeightVector pa = apply_permutation(traj_a[t], layout, traj_perm);
        const double d_equiv = l2_distance(pa.data, traj_b[t].data);
        const double d_base = l2_distance(traj_a[t].data, traj_b[t].data);
        const double ratio = d_equiv / std::max(d_base, 1e-12);
        const double acc_pp = std::abs(acc_a[t] - acc_b[t]) * 100.0;
        worst_ratio = std::max(worst_ratio, ratio);
        worst_acc_pp = std::max(worst_acc_pp, acc_pp);
        std::printf("  %5zu  %-12.4g %-11.4g %-9.4g %.4g\n", t + 1, d_equiv, d_base, ratio,
                    acc_pp);
    }
    std::cout << "max deviation ratio " << fmt_g(worst_ratio) << ", max accuracy gap "
              << fmt_g(worst_acc_pp) << " pp\n";

    std::string failures;
    if (worst_fwd >= a.tolerance)
        failures += "forward deviation " + fmt_g(worst_fwd) + " >= " + fmt_g(a.tolerance) + "; ";
    if (worst_ratio >= a.ratio_limit)
        failures += "trajectory ratio " + fmt_g(worst_ratio) + " >= " + fmt_g(a.ratio_limit) + "; ";
    if (worst_acc_pp >= a.acc_limit_pp)
        failures +=
            "accuracy gap " + fmt_g(worst_acc_pp) + "pp >= " + fmt_g(a.acc_limit_pp) + "pp; ";
    if (!failures.empty()) throw VerificationError("augmentation equivalence failed: " + failures);
    std::cout << "augmentation equivalence holds\n";
    return 0;
}

// ----------------------------------------------------------------- train

struct TrainArgs {
    std::string config_path;
    std::string zoo;
    std::string out;
    bool force = false;
    std::string mode = "ED";
    std::string tokenization = "per_neuron";
    SSLConfig ssl;
    EncoderConfig enc;
    uint64_t seed = 1;
    int log_every = 25;
};

int cmd_train(CLI::App* cmd, TrainArgs& a) {
    Overlay ov;
    ov.load(cmd, a.config_path);
    ov.get("--zoo", a.zoo);
    ov.get("--out", a.out);
    ov.get("--mode", a.mode);
    ov.get("--beta", a.ssl.beta);
    ov.get("--temperature", a.ssl.temperature);
    ov.get("--batch", a.ssl.batch_size);
    ov.get("--epochs", a.ssl.epochs);
    ov.get("--lr", a.ssl.lr);
    ov.get("--weight-decay", a.ssl.weight_decay);
    ov.get("--patience", a.ssl.patience);
    ov.get("--seed", a.seed);
    ov.get("--log-every", a.log_every);
    ov.get("--tokenization", a.tokenization);
    ov.get("--compression-token", a.enc.use_compression_token);
    ov.get("--blocks", a.enc.blocks);
    ov.get("--heads", a.enc.heads);
    ov.get("--token-dim", a.enc.token_dim);
    ov.get("--ffn-dim", a.enc.ffn_dim);
    ov.get("--latent", a.enc.latent_dim);
    ov.get("--dropout", a.enc.dropout);
    overlay_augment(ov, a.ssl.augment);
    ov.finish();

    if (a.zoo.empty()) throw ConfigError("train needs --zoo");
    if (a.out.empty()) throw ConfigError("train needs --out");
    a.ssl.mode = ssl_mode_from_string(a.mode);
    a.enc.tokenization = tokenization_from_string(a.tokenization);
    a.ssl.seed = a.seed;
    a.enc.seed = a.seed;
    a.ssl.validate();

    const ZooManifest m = load_manifest(a.zoo);
    const LayerLayout layout = derive_layout(arch_from_manifest(m));
    a.enc.validate(layout);

    prepare_out_dir(a.out, a.force);
    log_line(a.out, "train start (zoo " + a.zoo + ")");

    json resolved = {{"command", "train"},
                     {"zoo", a.zoo},
                     {"mode", ssl_mode_name(a.ssl.mode)},
                     {"beta", a.ssl.beta},
                     {"temperature", a.ssl.temperature},
                     {"batch", a.ssl.batch_size},
                     {"epochs", a.ssl.epochs},
                     {"lr", a.ssl.lr},
                     {"weight-decay", a.ssl.weight_decay},
                     {"patience", a.ssl.patience},
                     {"seed", a.seed},
                     {"encoder",
                      {{"tokenization", tokenization_name(a.enc.tokenization)},
                       {"compression-token", a.enc.use_compression_token},
                       {"blocks", a.enc.blocks},
                       {"heads", a.enc.heads},
                       {"token-dim", a.enc.token_dim},
                       {"ffn-dim", a.enc.ffn_dim},
                       {"latent", a.enc.latent_dim},
                       {"dropout", a.enc.dropout}}},
                     {"augment", augment_to_json(a.ssl.augment)}};
    write_text_file(fs::path(a.out) / "config.json", resolved.dump(1) + "\n");

    const auto train_split = load_split_checkpoints(m, a.zoo, "train");
    const auto val_split = load_split_checkpoints(m, a.zoo, "val");
    const auto test_split = load_split_checkpoints(m, a.zoo, "test");
    std::cout << "zoo '" << m.name << "': " << train_split.size() << " train / "
              << val_split.size() << " val / " << test_split.size()
              << " test checkpoints, N = " << layout.total << "\n";

    const bool track_val_loss = a.ssl.mode == SSLMode::Ec;
    auto progress = [&](const SSLEpoch& e) {
        if (a.log_every <= 0) return;
        if (e.epoch % a.log_every != 0 && e.epoch != 1 && e.epoch != a.ssl.epochs) return;
        std::cout << "epoch " << e.epoch << ": loss " << fmt_g(e.total_loss, 5);
        if (e.mse_part != 0.0 || e.contrast_part != 0.0)
            std::cout << " (mse " << fmt_g(e.mse_part, 5) << ", contrast "
                      << fmt_g(e.contrast_part, 5) << ")";
        std::cout << ", val R2 " << fmt_g(e.val_r2, 5);
        if (track_val_loss) std::cout << ", val loss " << fmt_g(e.val_loss, 5);
        std::cout << "\n";
        std::cout.flush();
    };

    const SSLResult result = train_hyperrep(train_split, val_split, layout, a.enc, a.ssl, progress);

    write_ssl_history_csv((fs::path(a.out) / "history.csv").string(), result.history);
    save_hyperrep((fs::path(a.out) / "encoder.hzb").string(), result.model);

    const double test_r2 = test_split.empty()
                               ? std::numeric_limits<double>::quiet_NaN()
                               : reconstruction_r2(result.model, test_split);
    const json results = {{"best-epoch", result.best_epoch},
                          {"best-val-r2", result.best_val_r2},
                          {"test-r2", test_r2},
                          {"epochs-run", result.history.size()}};
    write_text_file(fs::path(a.out) / "results.json", results.dump(1) + "\n");

    std::cout << "best epoch " << result.best_epoch << ": val R2 "
              << fmt_g(result.best_val_r2, 5) << ", test R2 " << fmt_g(test_r2, 5) << "\n";
    std::cout << "wrote " << (fs::path(a.out) / "encoder.hzb").string() << "\n";
    log_line(a.out, "train done (best epoch " + std::to_string(result.best_epoch) + ")");
    return 0;
}

// ----------------------------------------------------------------- probe

struct ProbeArgs {
    std::string config_path;
    std::string zoo;
    std::string encoder_path;
    std::string out;
    bool force = false;
    std::vector<std::string> sources;
    std::vector<std::string> tasks{"eph", "acc", "ggap"};
    ProbeOptions opt;
    bool no_standardize = false;
};

int cmd_probe(CLI::App* cmd, ProbeArgs& a) {
    Overlay ov;
    ov.load(cmd, a.config_path);
    ov.get("--zoo", a.zoo);
    ov.get("--encoder", a.encoder_path);
    ov.get("--out", a.out);
    ov.get("--sources", a.sources);
    ov.get("--tasks", a.tasks);
    ov.get("--pca-dim", a.opt.pca_dim);
    ov.get("--rbf-gamma", a.opt.rbf_gamma);
    ov.get("--kernel-cap", a.opt.kernel_train_cap);
    ov.get("--seed", a.opt.seed);
    ov.finish();

    if (a.zoo.empty()) throw ConfigError("probe needs --zoo");
    if (a.out.empty()) throw ConfigError("probe needs --out");
    a.opt.standardize = !a.no_standardize;
    if (a.sources.empty()) {
        a.sources = {"raw", "sw"};
        if (!a.encoder_path.empty()) a.sources.push_back("hyperrep");
    }
    std::vector<SourceKind> sources;
    for (const auto& s : a.sources) sources.push_back(source_from_string(s));
    for (const auto& t : a.tasks) (void)task_from_string(t);  // fail early on typos

    const ZooManifest m = load_manifest(a.zoo);
    const LayerLayout layout = derive_layout(arch_from_manifest(m));

    HyperRepModel encoder;
    const HyperRepModel* encoder_ptr = nullptr;
    const bool wants_latent =
        std::find(sources.begin(), sources.end(), SourceKind::hyperrep) != sources.end();
    if (!a.encoder_path.empty()) {
        encoder = load_hyperrep(a.encoder_path, layout);
        encoder_ptr = &encoder;
    } else if (wants_latent) {
        throw ConfigError("source 'hyperrep' needs --encoder");
    }

    prepare_out_dir(a.out, a.force);
    log_line(a.out, "probe start (zoo " + a.zoo + ")");
    const json resolved = {{"command", "probe"},
                           {"zoo", a.zoo},
                           {"encoder", a.encoder_path},
                           {"sources", a.sources},
                           {"tasks", a.tasks},
                           {"pca-dim", a.opt.pca_dim},
                           {"rbf-gamma", a.opt.rbf_gamma},
                           {"kernel-cap", a.opt.kernel_train_cap},
                           {"seed", a.opt.seed},
                           {"standardize", a.opt.standardize}};
    write_text_file(fs::path(a.out) / "config.json", resolved.dump(1) + "\n");

    const std::vector<ProbeCell> cells = run_probe_suite(m, a.zoo, sources, a.tasks, encoder_ptr,
                                                         a.opt);
    write_probe_csv((fs::path(a.out) / "probe.csv").string(), m.name, cells);

    std::cout << "source      task    metric  value      tau        alpha\n";
    for (const auto& c : cells)
        std::printf("%-11s %-7s %-7s %-10.4g %-10.4g %.4g\n", c.source.c_str(), c.task.c_str(),
                    c.metric.c_str(), c.value, c.tau, c.alpha);

    for (const auto& t : a.tasks) {
        std::vector<std::string> labels;
        std::vector<double> values;
        std::string metric = "r2";
        for (const auto& c : cells)
            if (c.task == t) {
                labels.push_back(c.source);
                values.push_back(c.value);
                metric = c.metric;
            }
        if (labels.empty()) continue;
        const std::string svg =
            svg_bar_chart("task " + t + " (" + metric + ") by feature source", labels, values);
        write_text_file(fs::path(a.out) / ("probe_" + t + ".svg"), svg);
    }
    std::cout << "wrote " << (fs::path(a.out) / "probe.csv").string() << "\n";
    log_line(a.out, "probe done");
    return 0;
}

// ------------------------------------------------------------------- ood

struct OodArgs {
    std::string config_path;
    std::string encoder_path;
    std::string source_zoo;
    std::string target_zoo;
    std::string out;
    bool force = false;
    std::vector<std::string> tasks{"eph", "acc", "ggap"};
};

int cmd_ood(CLI::App* cmd, OodArgs& a) {
    Overlay ov;
    ov.load(cmd, a.config_path);
    ov.get("--encoder", a.encoder_path);
    ov.get("--source-zoo", a.source_zoo);
    ov.get("--target-zoo", a.target_zoo);
    ov.get("--tasks", a.tasks);
    ov.get("--out", a.out);
    ov.finish();

    if (a.encoder_path.empty()) throw ConfigError("ood needs --encoder");
    if (a.source_zoo.empty() || a.target_zoo.empty())
        throw ConfigError("ood needs --source-zoo and --target-zoo");
    if (a.out.empty()) throw ConfigError("ood needs --out");

    const ZooManifest src = load_manifest(a.source_zoo);
    const ZooManifest tgt = load_manifest(a.target_zoo);
    const LayerLayout layout = derive_layout(arch_from_manifest(src));
    const HyperRepModel encoder = load_hyperrep(a.encoder_path, layout);

    prepare_out_dir(a.out, a.force);
    log_line(a.out, "ood start (" + a.source_zoo + " -> " + a.target_zoo + ")");
    const json resolved = {{"command", "ood"},
                           {"encoder", a.encoder_path},
                           {"source-zoo", a.source_zoo},
                           {"target-zoo", a.target_zoo},
                           {"tasks", a.tasks}};
    write_text_file(fs::path(a.out) / "config.json", resolved.dump(1) + "\n");

    const std::vector<OodCell> cells =
        ood_transfer(encoder, src, a.source_zoo, tgt, a.target_zoo, a.tasks);
    write_ood_csv((fs::path(a.out) / "ood.csv").string(), src.name, tgt.name, cells);

    std::cout << "transfer " << src.name << " -> " << tgt.name << "\n";
    std::cout << "task    tau        r2         n\n";
    for (const auto& c : cells)
        std::printf("%-7s %-10.4g %-10.4g %d\n", c.task.c_str(), c.tau, c.r2, c.n);
    std::cout << "wrote " << (fs::path(a.out) / "ood.csv").string() << "\n";
    log_line(a.out, "ood done");
    return 0;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
    std::vector<std::string> runs;
    std::string out = "report";
    bool force = false;
};

int cmd_report(ReportArgs& a) {
    if (a.runs.empty()) throw ConfigError("report needs at least one run directory");
    prepare_out_dir(a.out, a.force);

    const std::string md = markdown_report(a.runs);
    write_text_file(fs::path(a.out) / "report.md", md);

    std::vector<Series> curves;
    for (const auto& dir : a.runs) {
        const fs::path hist = fs::path(dir) / "history.csv";
        if (!fs::exists(hist)) continue;
        const CsvTable t = read_csv(hist.string());
        int ep_col = -1, r2_col = -1;
        for (size_t c = 0; c < t.header.size(); ++c) {
            if (t.header[c] == "epoch") ep_col = int(c);
            if (t.header[c] == "val_r2") r2_col = int(c);
        }
        if (ep_col < 0 || r2_col < 0) continue;
        Series s;
        s.label = fs::path(dir).filename().string();
        if (s.label.empty()) s.label = dir;
        for (const auto& row : t.rows) {
            s.x.push_back(std::atof(row[size_t(ep_col)].c_str()));
            s.y.push_back(std::atof(row[size_t(r2_col)].c_str()));
        }
        curves.push_back(std::move(s));
    }
    if (!curves.empty()) {
        const std::string svg = svg_line_chart("validation reconstruction R2", "epoch", "val R2",
                                               curves);
        write_text_file(fs::path(a.out) / "val_r2.svg", svg);
    }
    std::cout << "wrote " << (fs::path(a.out) / "report.md").string();
    if (!curves.empty()) std::cout << " and val_r2.svg";
    std::cout << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"model zoos and learned representations of their weights"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    std::function<int()> selected;

    // zoo generate
    auto* zoo_cmd = app.add_subcommand("zoo", "create and inspect model populations");
    zoo_cmd->require_subcommand(1);
    auto* zgen = zoo_cmd->add_subcommand(
        "generate", "train a population of small networks, checkpointing every epoch");
    ZooGenArgs zg;
    zgen->add_option("--config", zg.config_path, "JSON file with option defaults");
    zgen->add_option("--kind", zg.kind, "tetris_seed | tetris_hyp | mnist_seed | custom_grid");
    zgen->add_option("--models", zg.cfg.scale, "population size (grids round up to whole cells)");
    zgen->add_option("--epochs", zg.cfg.epochs, "training epochs per model");
    zgen->add_option("--seed", zg.cfg.seed, "population seed");
    zgen->add_option("--jobs", zg.cfg.jobs, "worker threads");
    zgen->add_option("--dataset", zg.cfg.dataset.kind, "tetris | idx");
    zgen->add_option("--dataset-seed", zg.cfg.dataset.seed, "dataset generation seed");
    zgen->add_option("--samples-per-class", zg.cfg.dataset.samples_per_class,
                     "tetris samples per class");
    zgen->add_option("--pixel-noise", zg.cfg.dataset.pixel_noise, "tetris pixel noise std");
    zgen->add_option("--images", zg.cfg.dataset.images_path, "idx image file");
    zgen->add_option("--labels", zg.cfg.dataset.labels_path, "idx label file");
    zgen->add_option("--train-fraction", zg.cfg.dataset.train_fraction,
                     "dataset fraction used for training");
    zgen->add_option("--grid-activations", zg.cfg.grid_activations, "custom grid axis")
        ->delimiter(',');
    zgen->add_option("--grid-inits", zg.cfg.grid_inits, "custom grid axis")->delimiter(',');
    zgen->add_option("--grid-lrs", zg.cfg.grid_lrs, "custom grid axis")->delimiter(',');
    zgen->add_option("--grid-l2s", zg.cfg.grid_l2s, "custom grid axis")->delimiter(',');
    zgen->add_option("--grid-dropouts", zg.cfg.grid_dropouts, "custom grid axis")->delimiter(',');
    zgen->add_option("--grid-train-fractions", zg.cfg.grid_train_fractions, "custom grid axis")
        ->delimiter(',');
    zgen->add_option("--seeds-per-cell", zg.cfg.grid_seeds_per_cell, "custom grid repeats");
    zgen->add_option("--out", zg.out, "output directory");
    zgen->add_flag("--force", zg.force, "write into a non-empty output directory");
    zgen->add_flag("--strict-determinism", zg.strict, "single worker, bitwise reproducible");
    zgen->callback([&] { selected = [&] { return cmd_zoo_generate(zgen, zg); }; });

    // augment verify
    auto* aug_cmd = app.add_subcommand("augment", "weight-space augmentation checks");
    aug_cmd->require_subcommand(1);
    auto* averify = aug_cmd->add_subcommand(
        "verify", "check that unit permutations preserve outputs and training trajectories");
    AugVerifyArgs av;
    averify->add_option("--config", av.config_path, "JSON file with option defaults");
    averify->add_option("--zoo", av.zoo, "zoo directory")->required();
    averify->add_option("--samples", av.samples, "checkpoints to test");
    averify->add_option("--perms", av.perms, "permutations per checkpoint");
    averify->add_option("--inputs", av.inputs, "dataset samples fed through each network");
    averify->add_option("--epochs", av.epochs, "trajectory test epochs");
    averify->add_option("--tolerance", av.tolerance, "max allowed logit deviation");
    averify->add_option("--ratio-limit", av.ratio_limit,
                        "max |perm(A)-B| / |A-B| along the trajectory");
    averify->add_option("--acc-limit", av.acc_limit_pp,
                        "max per-epoch test accuracy gap, percentage points");
    averify->add_option("--seed", av.seed, "sampling seed");
    averify->callback([&] { selected = [&] { return cmd_augment_verify(averify, av); }; });

    // train
    auto* train = app.add_subcommand("train",
                                     "fit the weight autoencoder on a zoo's checkpoints");
    TrainArgs ta;
    train->add_option("--config", ta.config_path, "JSON file with option defaults");
    train->add_option("--zoo", ta.zoo, "zoo directory")->required();
    train->add_option("--out", ta.out, "output directory")->required();
    train->add_option("--mode", ta.mode, "ED | Ec | EcD | Ec+D");
    train->add_option("--beta", ta.ssl.beta, "reconstruction weight in combined modes");
    train->add_option("--temperature", ta.ssl.temperature, "contrastive temperature");
    train->add_option("--batch", ta.ssl.batch_size, "minibatch size");
    train->add_option("--epochs", ta.ssl.epochs, "training epochs");
    train->add_option("--lr", ta.ssl.lr, "learning rate");
    train->add_option("--weight-decay", ta.ssl.weight_decay, "adam weight decay");
    train->add_option("--patience", ta.ssl.patience,
                      "stop after this many epochs without a validation best (0 = never)");
    train->add_option("--seed", ta.seed, "initialization and data-order seed");
    train->add_option("--log-every", ta.log_every, "progress print interval (0 = quiet)");
    train->add_option("--tokenization", ta.tokenization, "per_neuron | per_weight");
    train->add_flag("--compression-token,!--no-compression-token",
                    ta.enc.use_compression_token, "pool through a learned summary token");
    train->add_option("--blocks", ta.enc.blocks, "attention blocks per coder");
    train->add_option("--heads", ta.enc.heads, "attention heads");
    train->add_option("--token-dim", ta.enc.token_dim, "token embedding width");
    train->add_option("--ffn-dim", ta.enc.ffn_dim, "feed-forward width inside blocks");
    train->add_option("--latent", ta.enc.latent_dim, "bottleneck width");
    train->add_option("--dropout", ta.enc.dropout, "dropout rate inside blocks");
    add_augment_flags(train, ta.ssl.augment);
    train->add_flag("--force", ta.force, "write into a non-empty output directory");
    train->callback([&] { selected = [&] { return cmd_train(train, ta); }; });

    // probe
    auto* probe = app.add_subcommand("probe",
                                     "linear probes from weight features to model properties");
    ProbeArgs pa;
    probe->add_option("--config", pa.config_path, "JSON file with option defaults");
    probe->add_option("--zoo", pa.zoo, "zoo directory")->required();
    probe->add_option("--encoder", pa.encoder_path, "trained encoder bundle (.hzb)");
    probe->add_option("--out", pa.out, "output directory")->required();
    probe->add_option("--sources", pa.sources,
                      "feature sources: raw, sw, pca, pca_cosine, pca_rbf, hyperrep")
        ->delimiter(',');
    probe->add_option("--tasks", pa.tasks,
                      "targets: eph, acc, ggap, lr, l2, drop, tf, f1_<k>, act, init, opt")
        ->delimiter(',');
    probe->add_option("--pca-dim", pa.opt.pca_dim, "components (0 = encoder latent width)");
    probe->add_option("--rbf-gamma", pa.opt.rbf_gamma, "rbf kernel gamma (0 = 1/d)");
    probe->add_option("--kernel-cap", pa.opt.kernel_train_cap, "kernel pca training subsample");
    probe->add_option("--seed", pa.opt.seed, "probe seed");
    probe->add_flag("--no-standardize", pa.no_standardize,
                    "skip z-scoring raw and statistic features");
    probe->add_flag("--force", pa.force, "write into a non-empty output directory");
    probe->callback([&] { selected = [&] { return cmd_probe(probe, pa); }; });

    // ood
    auto* ood = app.add_subcommand(
        "ood", "score probes trained on one zoo against another zoo's test split");
    OodArgs oa;
    ood->add_option("--config", oa.config_path, "JSON file with option defaults");
    ood->add_option("--encoder", oa.encoder_path, "trained encoder bundle (.hzb)")->required();
    ood->add_option("--source-zoo", oa.source_zoo, "zoo the probes are fitted on")->required();
    ood->add_option("--target-zoo", oa.target_zoo, "zoo whose test split is scored")->required();
    ood->add_option("--tasks", oa.tasks, "regression targets")->delimiter(',');
    ood->add_option("--out", oa.out, "output directory")->required();
    ood->add_flag("--force", oa.force, "write into a non-empty output directory");
    ood->callback([&] { selected = [&] { return cmd_ood(ood, oa); }; });

    // report
    auto* report = app.add_subcommand("report", "aggregate run directories into markdown + SVG");
    ReportArgs ra;
    report->add_option("runs", ra.runs, "run directories (train/probe/ood outputs)")->required();
    report->add_option("--out", ra.out, "output directory");
    report->add_flag("--force", ra.force, "write into a non-empty output directory");
    report->callback([&] { selected = [&] { return cmd_report(ra); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (!selected) return 2;
    return selected();
}

}  // namespace hz
