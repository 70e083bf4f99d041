#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hz/arch.hpp"
#include "hz/tensor.hpp"

namespace hz {

// Flat weight snapshot, magic "HZW1". Little-endian on disk regardless of
// host. Header: magic[4], endian flag byte (1 = little), 3 reserved bytes,
// u64 layout hash, u32 count, i32 model id, i32 epoch, then count f32.
void save_checkpoint(const std::string& path, const WeightVector& v);

// expected_layout_hash 0 skips the consistency check.
WeightVector load_checkpoint(const std::string& path, uint64_t expected_layout_hash = 0);

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

// Container for a set of named tensors plus a free-form config string
// (JSON by convention), magic "HZB1". Round-trips bit-exactly.
void save_bundle(const std::string& path, const std::string& config,
                 const std::vector<std::pair<std::string, const Tensor*>>& params);

struct Bundle {
    std::string config;
    std::vector<NamedArray> arrays;
};

Bundle load_bundle(const std::string& path);

}  // namespace hz
