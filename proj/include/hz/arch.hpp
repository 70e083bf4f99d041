#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hz/errors.hpp"
#include "hz/ops.hpp"

namespace hz {

enum class LayerKind { dense, conv, maxpool, act, flatten };

struct LayerDesc {
    LayerKind kind = LayerKind::dense;
    int in = 0;        // dense: in features; conv: in channels
    int out = 0;       // dense: out features; conv: out channels
    int ksize = 0;     // conv kernel / pool window
    bool has_bias = true;
    Act act = Act::identity;  // for LayerKind::act
};

struct ArchSpec {
    std::string name;
    std::vector<int> input_shape;  // {c, h, w}
    int classes = 0;
    std::vector<LayerDesc> layers;
};

// 16 -> 5 -> 4 feed-forward net over flattened 4x4 tetris boards. Both dense
// layers are bias-free, giving exactly 100 parameters.
ArchSpec build_ffn_tetris(Act activation = Act::tanh_fn);

// Three valid stride-1 convs (two followed by 2x2 max pools) and two dense
// layers over 28x28 inputs; 2464 parameters including biases.
ArchSpec build_cnn_mnist(Act activation = Act::tanh_fn);

size_t param_count(const ArchSpec& arch);

// ----------------------------------------------------------------- layout

// One parameterized layer inside the flat weight vector. Weights are stored
// row-major [units, in_per_unit] at w_off, then (optionally) units bias
// values at b_off. `next_cols[u]` lists the flat indices in the following
// parameterized layer's weights that move together with unit u when the
// layer is permuted; empty for the final (non permutable) layer.
struct LayerSegment {
    LayerKind kind = LayerKind::dense;
    int units = 0;
    int in_per_unit = 0;   // dense: in features; conv: c_in * kh * kw
    int receptive = 1;     // conv: kh * kw; dense: 1
    size_t w_off = 0;
    size_t b_off = 0;
    bool has_bias = false;
    bool permutable = false;
    std::vector<std::vector<uint32_t>> next_cols;

    size_t unit_w_off(int u) const { return w_off + size_t(u) * in_per_unit; }
    size_t slice_len() const { return size_t(in_per_unit) + (has_bias ? 1 : 0); }
};

struct LayerLayout {
    size_t total = 0;  // N
    std::vector<LayerSegment> segments;
    uint64_t hash = 0;          // stable structural fingerprint
    int max_slice_len = 0;      // longest per-unit slice incl. bias
    int token_count = 0;        // total units across segments

    int permutable_count() const {
        int c = 0;
        for (const auto& s : segments) c += s.permutable ? 1 : 0;
        return c;
    }
};

// Walks the arch, assigns flat offsets in forward order (weights then bias
// per layer), and records the cross-layer column groups each hidden unit
// drags along under permutation. Dimension chains are validated.
LayerLayout derive_layout(const ArchSpec& arch);

// ----------------------------------------------------------------- weights

struct WeightVector {
    std::vector<float> data;
    uint64_t layout_hash = 0;
    int32_t model_id = -1;
    int32_t epoch = -1;
};

// Flat index map for per-unit slices: token t covers `slice_len` entries
// (incoming weights then bias), -1 where padded to max_slice_len.
std::vector<int32_t> unit_slice_map(const LayerLayout& layout);

// Per layer, weights and biases separately: mean, variance, and the
// {0,25,50,75,100}% quantiles with linear interpolation -> 7 features per
// present group.
std::vector<double> weight_statistics(const WeightVector& v, const LayerLayout& layout);
std::vector<std::string> weight_statistic_names(const LayerLayout& layout);

}  // namespace hz
