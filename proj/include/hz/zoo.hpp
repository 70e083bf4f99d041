#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hz/model.hpp"

namespace hz {

enum class ZooKind { tetris_seed, tetris_hyp, mnist_seed, custom_grid };

ZooKind zoo_kind_from_string(const std::string& s);
const char* zoo_kind_name(ZooKind k);

struct DatasetSpec {
    std::string kind = "tetris";  // "tetris" or "idx"
    uint64_t seed = 1;
    int samples_per_class = 200;
    double pixel_noise = 0.1;
    std::string images_path;  // idx only
    std::string labels_path;
    double train_fraction = 0.7;
    uint64_t fingerprint = 0;  // filled at generation time
};

struct ZooModelEntry {
    int id = 0;
    TrainConfig config;
    std::string split = "none";  // train / val / test / excluded
    bool crashed = false;
    std::string crash_reason;
    std::vector<EpochRecord> epochs;
};

struct ZooManifest {
    std::string name;
    std::string arch_name;  // "tetris_ffn" or "mnist_cnn"
    uint64_t layout_hash = 0;
    int epochs = 0;
    DatasetSpec dataset;
    std::vector<ZooModelEntry> models;

    std::vector<int> model_ids_in_split(const std::string& split) const;
};

struct ZooGenConfig {
    ZooKind kind = ZooKind::tetris_seed;
    int scale = 200;   // number of models (grid kinds round up to whole grids)
    int epochs = 25;
    uint64_t seed = 1;
    DatasetSpec dataset;
    int jobs = 1;
    // custom_grid axes; empty lists fall back to the kind's fixed value
    std::vector<std::string> grid_activations;
    std::vector<std::string> grid_inits;
    std::vector<double> grid_lrs;
    std::vector<double> grid_l2s;
    std::vector<double> grid_dropouts;
    std::vector<double> grid_train_fractions;
    int grid_seeds_per_cell = 1;
};

// Trains `scale` base models, writes one checkpoint per (model, epoch) under
// out_dir/checkpoints plus out_dir/manifest.json, and assigns 70/15/15
// model-level splits over the non-crashed models. Returns the manifest.
ZooManifest generate_zoo(const ZooGenConfig& cfg, const std::string& out_dir);

void save_manifest(const ZooManifest& m, const std::string& dir);
ZooManifest load_manifest(const std::string& dir);

std::string checkpoint_rel_path(int model_id, int epoch);

// Rebuilds the dataset a manifest was generated from (tetris is regenerated
// from its recorded parameters; idx re-reads the recorded files) and checks
// the fingerprint.
ImageDataset dataset_from_spec(const DatasetSpec& spec);

// The arch named in the manifest, activation per model config.
ArchSpec arch_from_manifest(const ZooManifest& m, Act activation);
ArchSpec arch_from_manifest(const ZooManifest& m);

// All (model, epoch) checkpoints of the given split, in (id, epoch) order.
struct ZooSample {
    int model_id = 0;
    int epoch = 0;
    WeightVector weights;
};

std::vector<ZooSample> load_split_checkpoints(const ZooManifest& m, const std::string& dir,
                                              const std::string& split);

}  // namespace hz
