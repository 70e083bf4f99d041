#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hz/arch.hpp"
#include "hz/dataset.hpp"
#include "hz/optim.hpp"

namespace hz {

enum class InitKind {
    uniform,          // U(-0.02, 0.02), biases too
    normal,           // N(0, 0.02), biases too
    kaiming_uniform,  // U(+-sqrt(6/fan_in)), biases zero
    kaiming_normal,   // N(0, sqrt(2/fan_in)), biases zero
    xavier_uniform,   // U(+-sqrt(6/(fan_in+fan_out))), biases zero
    xavier_normal,    // N(0, sqrt(2/(fan_in+fan_out))), biases zero
};

InitKind init_from_string(const std::string& s);
const char* init_name(InitKind k);

WeightVector init_weights(const ArchSpec& arch, const LayerLayout& layout, InitKind kind,
                          uint64_t seed);

// Parameter tensors for one model, in layout segment order: weight then
// optional bias per parameterized layer.
struct ModelParams {
    std::vector<Tensor> tensors;
};

ModelParams params_from_vector(const LayerLayout& layout, const WeightVector& v, bool requires_grad);
WeightVector vector_from_params(const LayerLayout& layout, const ModelParams& p);

// Batched forward to logits. `dropout` is applied to the input of each dense
// layer while training. Input is n samples of the arch's input shape.
Tensor forward_logits(const ArchSpec& arch, const ModelParams& p, const float* pixels, int n,
                      bool training, double dropout, RngStream& rng);

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::vector<double> per_class_f1;
};

EvalResult evaluate_model(const ArchSpec& arch, const ModelParams& p, const ImageDataset& d);

struct TrainConfig {
    uint64_t seed = 1;
    InitKind init = InitKind::uniform;
    Act activation = Act::tanh_fn;
    OptimKind optimizer = OptimKind::adam;
    double lr = 3e-5;
    double l2_reg = 0.0;
    double dropout = 0.0;
    double train_fraction = 0.7;
    int epochs = 25;
    int batch_size = 4;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double generalization_gap = 0.0;  // train_acc - test_acc
    std::vector<double> per_class_f1;  // on the test split
};

struct TrainOutcome {
    WeightVector final_weights;
    std::vector<EpochRecord> epochs;
    bool crashed = false;
    std::string crash_reason;
};

// Trains from the given initial vector. Minibatch order, dropout masks and
// everything else stochastic derive from config.seed, so two calls with the
// same config and init replay the same step sequence. The callback (if set)
// receives the weights after each epoch, before any crash cutoff.
TrainOutcome train_model(const ArchSpec& arch, const LayerLayout& layout,
                         const ImageDataset& train_set, const ImageDataset& test_set,
                         const TrainConfig& config, const WeightVector& initial,
                         const std::function<void(int, const WeightVector&, const EpochRecord&)>&
                             per_epoch = nullptr);

}  // namespace hz
