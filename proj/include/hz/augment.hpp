#pragma once

#include <utility>
#include <vector>

#include "hz/arch.hpp"
#include "hz/rng.hpp"

namespace hz {

// Precomputed index permutations for every permutable segment of a layout,
// in segment order. Entry `order` means: new unit u takes over old unit
// order[u] (its weight row, bias, and the downstream columns it feeds).
struct PermutationSet {
    struct LayerPerms {
        int segment = 0;  // index into layout.segments
        std::vector<std::vector<int>> perms;
    };
    std::vector<LayerPerms> layers;
};

// If count covers the whole group of a layer (count >= units!), that layer
// gets the full group in lexicographic order; otherwise count distinct
// permutations sampled without replacement. Deterministic per seed.
PermutationSet sample_permutation_set(const LayerLayout& layout, int count, uint64_t seed);

std::vector<int> invert_permutation(const std::vector<int>& order);

// One selected permutation for one segment.
struct SegmentPerm {
    int segment = 0;
    std::vector<int> order;
};

// Reorders the units of each listed segment together with the column groups
// they feed in the following layer, leaving the network function unchanged.
// Segments must be permutable (the output layer is not), each order a
// bijection on [0, units).
WeightVector apply_permutation(const WeightVector& v, const LayerLayout& layout,
                               const std::vector<SegmentPerm>& perms);

struct AugmentConfig {
    bool use_permutation = true;
    bool use_erase = true;
    bool use_noise = false;
    int permutation_count = 120;
    double erase_prob = 0.5;
    double erase_low = 0.03;
    double erase_high = 0.3;
    double noise_std = 0.05;

    bool any_enabled() const { return use_permutation || use_erase || use_noise; }
    void validate() const;
};

// With probability erase_prob zeroes one contiguous run whose length is
// drawn uniformly from [erase_low*N, erase_high*N] (rounded, at least 1) at
// a uniform start. Otherwise returns v as is.
WeightVector erase(const WeightVector& v, const AugmentConfig& cfg, RngStream& rng);

WeightVector add_noise(const WeightVector& v, double std, RngStream& rng);

// One augmented draw: permutation (uniform pick per layer from the set),
// then erase, then noise. `target` stops after the permutation, so it is
// the uncorrupted twin reconstruction losses should point at.
struct View {
    WeightVector input;
    WeightVector target;
};

View make_view(const WeightVector& v, const LayerLayout& layout, const PermutationSet& set,
               const AugmentConfig& cfg, RngStream& rng);

// Two independent draws for the contrastive pair. At least one augmentation
// must be enabled.
std::pair<View, View> make_views(const WeightVector& v, const LayerLayout& layout,
                                 const PermutationSet& set, const AugmentConfig& cfg,
                                 RngStream& rng);

}  // namespace hz
