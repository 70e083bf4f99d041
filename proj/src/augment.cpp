#include "hz/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace hz {

namespace {

// Whether units! <= count without overflowing.
bool group_fits(int units, long long count) {
    long long f = 1;
    for (int i = 2; i <= units; ++i) {
        f *= i;
        if (f > count) return false;
    }
    return true;
}

std::vector<std::vector<int>> full_group(int units) {
    std::vector<int> p(units);
    std::iota(p.begin(), p.end(), 0);
    std::vector<std::vector<int>> out;
    do {
        out.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    return out;
}

std::vector<std::vector<int>> sample_distinct(int units, int count, RngStream& rng) {
    std::set<std::vector<int>> seen;
    std::vector<std::vector<int>> out;
    std::vector<int> p(units);
    std::iota(p.begin(), p.end(), 0);
    while (int(out.size()) < count) {
        for (size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
        if (seen.insert(p).second) out.push_back(p);
    }
    return out;
}

}  // namespace

PermutationSet sample_permutation_set(const LayerLayout& layout, int count, uint64_t seed) {
    if (count < 1) throw ConfigError("permutation set: count must be >= 1");
    PermutationSet set;
    RngStream root = RngStream::root(seed).derive("perm_set");
    for (size_t si = 0; si < layout.segments.size(); ++si) {
        const LayerSegment& seg = layout.segments[si];
        if (!seg.permutable) continue;
        PermutationSet::LayerPerms lp;
        lp.segment = int(si);
        if (group_fits(seg.units, count)) {
            lp.perms = full_group(seg.units);
        } else {
            RngStream rng = root.derive(uint64_t(si));
            lp.perms = sample_distinct(seg.units, count, rng);
        }
        set.layers.push_back(std::move(lp));
    }
    return set;
}

std::vector<int> invert_permutation(const std::vector<int>& order) {
    std::vector<int> inv(order.size());
    for (size_t u = 0; u < order.size(); ++u) inv[size_t(order[u])] = int(u);
    return inv;
}

namespace {

void check_bijection(const std::vector<int>& order, int units) {
    if (int(order.size()) != units)
        throw SymmetryError("permutation: order size " + std::to_string(order.size()) +
                            " != units " + std::to_string(units));
    std::vector<char> hit(units, 0);
    for (int o : order) {
        if (o < 0 || o >= units || hit[o])
            throw SymmetryError("permutation: order is not a bijection");
        hit[o] = 1;
    }
}

}  // namespace

WeightVector apply_permutation(const WeightVector& v, const LayerLayout& layout,
                               const std::vector<SegmentPerm>& perms) {
    if (v.data.size() != layout.total)
        throw LengthError("permutation: vector size " + std::to_string(v.data.size()) +
                          " != layout total " + std::to_string(layout.total));
    WeightVector out = v;
    for (const SegmentPerm& sp : perms) {
        if (sp.segment < 0 || sp.segment >= int(layout.segments.size()))
            throw SymmetryError("permutation: no segment " + std::to_string(sp.segment));
        const LayerSegment& seg = layout.segments[size_t(sp.segment)];
        if (!seg.permutable)
            throw SymmetryError("permutation: segment " + std::to_string(sp.segment) +
                                " is not permutable (output order is fixed)");
        check_bijection(sp.order, seg.units);

        const std::vector<float> snap = out.data;
        for (int u = 0; u < seg.units; ++u) {
            const int src = sp.order[size_t(u)];
            std::copy_n(snap.data() + seg.unit_w_off(src), seg.in_per_unit,
                        out.data.data() + seg.unit_w_off(u));
            if (seg.has_bias) out.data[seg.b_off + size_t(u)] = snap[seg.b_off + size_t(src)];
            const auto& dst_cols = seg.next_cols[size_t(u)];
            const auto& src_cols = seg.next_cols[size_t(src)];
            for (size_t k = 0; k < dst_cols.size(); ++k)
                out.data[dst_cols[k]] = snap[src_cols[k]];
        }
    }
    return out;
}

void AugmentConfig::validate() const {
    if (erase_prob < 0.0 || erase_prob > 1.0)
        throw ConfigError("augment: erase_prob must be in [0, 1]");
    if (use_erase && !(erase_low > 0.0 && erase_low <= erase_high && erase_high < 1.0))
        throw ConfigError("augment: need 0 < erase_low <= erase_high < 1");
    if (noise_std < 0.0) throw ConfigError("augment: noise_std must be >= 0");
    if (permutation_count < 1) throw ConfigError("augment: permutation_count must be >= 1");
}

WeightVector erase(const WeightVector& v, const AugmentConfig& cfg, RngStream& rng) {
    cfg.validate();
    if (rng.uniform01() >= cfg.erase_prob) return v;
    const size_t n = v.data.size();
    if (n == 0) return v;
    long len = std::lround(rng.uniform(cfg.erase_low * double(n), cfg.erase_high * double(n)));
    len = std::clamp(len, 1L, long(n));
    WeightVector out = v;
    const size_t start = rng.below(n - size_t(len) + 1);
    std::fill_n(out.data.data() + start, size_t(len), 0.0f);
    return out;
}

WeightVector add_noise(const WeightVector& v, double std, RngStream& rng) {
    if (std < 0.0) throw ConfigError("augment: noise std must be >= 0");
    if (std == 0.0) return v;
    WeightVector out = v;
    for (float& x : out.data) x = float(double(x) + rng.normal(0.0, std));
    return out;
}

View make_view(const WeightVector& v, const LayerLayout& layout, const PermutationSet& set,
               const AugmentConfig& cfg, RngStream& rng) {
    cfg.validate();
    View view;
    view.target = v;
    if (cfg.use_permutation && !set.layers.empty()) {
        std::vector<SegmentPerm> picked;
        for (const auto& lp : set.layers) {
            SegmentPerm sp;
            sp.segment = lp.segment;
            sp.order = lp.perms[rng.below(lp.perms.size())];
            picked.push_back(std::move(sp));
        }
        view.target = apply_permutation(v, layout, picked);
    }
    view.input = view.target;
    if (cfg.use_erase) view.input = erase(view.input, cfg, rng);
    if (cfg.use_noise) view.input = add_noise(view.input, cfg.noise_std, rng);
    return view;
}

std::pair<View, View> make_views(const WeightVector& v, const LayerLayout& layout,
                                 const PermutationSet& set, const AugmentConfig& cfg,
                                 RngStream& rng) {
    if (!cfg.any_enabled())
        throw ConfigError("augment: view pair requested with every augmentation disabled");
    View a = make_view(v, layout, set, cfg, rng);
    View b = make_view(v, layout, set, cfg, rng);
    return {std::move(a), std::move(b)};
}

}  // namespace hz
