#include "hz/arch.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hz/rng.hpp"

namespace hz {

ArchSpec build_ffn_tetris(Act activation) {
    ArchSpec a;
    a.name = "tetris_ffn";
    a.input_shape = {1, 4, 4};
    a.classes = 4;
    a.layers.push_back({LayerKind::flatten});
    a.layers.push_back({LayerKind::dense, 16, 5, 0, false});
    a.layers.push_back({LayerKind::act, 0, 0, 0, true, activation});
    a.layers.push_back({LayerKind::dense, 5, 4, 0, false});
    return a;
}

ArchSpec build_cnn_mnist(Act activation) {
    ArchSpec a;
    a.name = "mnist_cnn";
    a.input_shape = {1, 28, 28};
    a.classes = 10;
    a.layers.push_back({LayerKind::conv, 1, 8, 5, true});
    a.layers.push_back({LayerKind::maxpool, 0, 0, 2});
    a.layers.push_back({LayerKind::act, 0, 0, 0, true, activation});
    a.layers.push_back({LayerKind::conv, 8, 6, 5, true});
    a.layers.push_back({LayerKind::maxpool, 0, 0, 2});
    a.layers.push_back({LayerKind::act, 0, 0, 0, true, activation});
    a.layers.push_back({LayerKind::conv, 6, 4, 2, true});
    a.layers.push_back({LayerKind::act, 0, 0, 0, true, activation});
    a.layers.push_back({LayerKind::flatten});
    a.layers.push_back({LayerKind::dense, 36, 20, 0, true});
    a.layers.push_back({LayerKind::act, 0, 0, 0, true, activation});
    a.layers.push_back({LayerKind::dense, 20, 10, 0, true});
    return a;
}

size_t param_count(const ArchSpec& arch) {
    size_t n = 0;
    for (const auto& l : arch.layers) {
        if (l.kind == LayerKind::dense)
            n += size_t(l.in) * l.out + (l.has_bias ? size_t(l.out) : 0);
        else if (l.kind == LayerKind::conv)
            n += size_t(l.out) * l.in * l.ksize * l.ksize + (l.has_bias ? size_t(l.out) : 0);
    }
    return n;
}

namespace {

struct Dims {
    int c, h, w;  // h=w=0 once flattened; c is then the flat feature count
    bool flat = false;
};

}  // namespace

LayerLayout derive_layout(const ArchSpec& arch) {
    if (arch.input_shape.size() != 3) throw LayoutError("derive_layout: input shape must be {c,h,w}");
    LayerLayout out;
    Dims dims{arch.input_shape[0], arch.input_shape[1], arch.input_shape[2], false};
    size_t off = 0;

    struct Pending {
        size_t seg_index;
        int units;
        int spatial;  // h*w at flatten time for conv units feeding a dense layer, else 1
        bool conv;
    };
    std::vector<Pending> open;  // last parameterized layer, awaiting its successor

    auto close_pending = [&](const LayerSegment& next_seg) {
        if (open.empty()) return;
        Pending p = open.back();
        open.pop_back();
        LayerSegment& seg = out.segments[p.seg_index];
        seg.permutable = true;
        seg.next_cols.resize(size_t(p.units));
        if (next_seg.kind == LayerKind::dense) {
            const int in2 = next_seg.in_per_unit;
            if (p.units * p.spatial != in2)
                throw LayoutError("derive_layout: feature chain mismatch into dense layer");
            for (int u = 0; u < p.units; ++u) {
                auto& cols = seg.next_cols[size_t(u)];
                cols.reserve(size_t(next_seg.units) * p.spatial);
                for (int r = 0; r < next_seg.units; ++r)
                    for (int t = 0; t < p.spatial; ++t)
                        cols.push_back(uint32_t(next_seg.w_off + size_t(r) * in2 + size_t(u) * p.spatial + t));
            }
        } else {  // conv -> conv: input-channel slices of each kernel
            const int kk = next_seg.in_per_unit / p.units;  // kh*kw
            if (next_seg.in_per_unit != p.units * kk)
                throw LayoutError("derive_layout: channel chain mismatch into conv layer");
            for (int u = 0; u < p.units; ++u) {
                auto& cols = seg.next_cols[size_t(u)];
                cols.reserve(size_t(next_seg.units) * kk);
                for (int o = 0; o < next_seg.units; ++o)
                    for (int t = 0; t < kk; ++t)
                        cols.push_back(uint32_t(next_seg.w_off + size_t(o) * next_seg.in_per_unit +
                                                size_t(u) * kk + t));
            }
        }
    };

    for (const auto& l : arch.layers) {
        switch (l.kind) {
            case LayerKind::flatten:
                if (!dims.flat) {
                    dims.c = dims.c * dims.h * dims.w;
                    dims.h = dims.w = 0;
                    dims.flat = true;
                }
                break;
            case LayerKind::act:
                break;
            case LayerKind::maxpool:
                if (dims.flat) throw LayoutError("derive_layout: pool after flatten");
                dims.h /= l.ksize;
                dims.w /= l.ksize;
                if (dims.h == 0 || dims.w == 0) throw LayoutError("derive_layout: pooled away to nothing");
                break;
            case LayerKind::dense: {
                if (!dims.flat) throw LayoutError("derive_layout: dense before flatten");
                if (dims.c != l.in)
                    throw LayoutError("derive_layout: dense expects " + std::to_string(l.in) +
                                      " features, chain provides " + std::to_string(dims.c));
                LayerSegment seg;
                seg.kind = LayerKind::dense;
                seg.units = l.out;
                seg.in_per_unit = l.in;
                seg.has_bias = l.has_bias;
                seg.w_off = off;
                off += size_t(l.out) * l.in;
                seg.b_off = l.has_bias ? off : size_t(-1);
                if (l.has_bias) off += size_t(l.out);
                close_pending(seg);
                out.segments.push_back(seg);
                open.push_back({out.segments.size() - 1, l.out, 1, false});
                dims.c = l.out;
                break;
            }
            case LayerKind::conv: {
                if (dims.flat) throw LayoutError("derive_layout: conv after flatten");
                if (dims.c != l.in)
                    throw LayoutError("derive_layout: conv expects " + std::to_string(l.in) +
                                      " channels, chain provides " + std::to_string(dims.c));
                LayerSegment seg;
                seg.kind = LayerKind::conv;
                seg.units = l.out;
                seg.in_per_unit = l.in * l.ksize * l.ksize;
                seg.receptive = l.ksize * l.ksize;
                seg.has_bias = l.has_bias;
                seg.w_off = off;
                off += size_t(l.out) * seg.in_per_unit;
                seg.b_off = l.has_bias ? off : size_t(-1);
                if (l.has_bias) off += size_t(l.out);
                close_pending(seg);
                out.segments.push_back(seg);
                dims.h = dims.h - l.ksize + 1;
                dims.w = dims.w - l.ksize + 1;
                if (dims.h <= 0 || dims.w <= 0) throw LayoutError("derive_layout: conv shrinks below 1x1");
                dims.c = l.out;
                open.push_back({out.segments.size() - 1, l.out, -1, true});
                break;
            }
        }
        // Conv units feeding a dense layer carry h*w columns each; capture
        // the spatial extent as it stands when flattening happens.
        if (l.kind == LayerKind::flatten && !open.empty() && open.back().conv &&
            open.back().spatial == -1) {
            // dims.c was already multiplied; recover h*w from unit count
            open.back().spatial = dims.c / open.back().units;
        }
    }
    if (!open.empty()) {
        // Last parameterized layer: output layer, never permuted.
        out.segments[open.back().seg_index].permutable = false;
    }
    out.total = off;
    int tokens = 0, max_slice = 0;
    for (const auto& s : out.segments) {
        tokens += s.units;
        max_slice = std::max(max_slice, int(s.slice_len()));
    }
    out.token_count = tokens;
    out.max_slice_len = max_slice;

    std::ostringstream sig;
    sig << arch.name << "|in:" << arch.input_shape[0] << "x" << arch.input_shape[1] << "x"
        << arch.input_shape[2];
    for (const auto& s : out.segments)
        sig << "|" << (s.kind == LayerKind::dense ? "d" : "c") << s.units << ":" << s.in_per_unit
            << (s.has_bias ? "+b" : "") << (s.permutable ? "p" : "f");
    sig << "|N:" << out.total;
    out.hash = fnv1a64(sig.str());
    return out;
}

std::vector<int32_t> unit_slice_map(const LayerLayout& layout) {
    std::vector<int32_t> map;
    map.reserve(size_t(layout.token_count) * layout.max_slice_len);
    for (const auto& seg : layout.segments)
        for (int u = 0; u < seg.units; ++u) {
            const size_t wo = seg.unit_w_off(u);
            for (int i = 0; i < seg.in_per_unit; ++i) map.push_back(int32_t(wo + i));
            if (seg.has_bias) map.push_back(int32_t(seg.b_off + size_t(u)));
            for (int i = int(seg.slice_len()); i < layout.max_slice_len; ++i) map.push_back(-1);
        }
    return map;
}

namespace {

// Quantile with linear interpolation on the sorted values.
double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    if (sorted.size() == 1) return sorted[0];
    const double pos = q * double(sorted.size() - 1);
    const size_t lo = size_t(pos);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - double(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

void stats7(const float* begin, size_t n, std::vector<double>& out) {
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += double(begin[i]);
    mean /= double(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double c = double(begin[i]) - mean;
        var += c * c;
    }
    var /= double(n);
    std::vector<double> sorted(begin, begin + n);
    std::sort(sorted.begin(), sorted.end());
    out.push_back(mean);
    out.push_back(var);
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) out.push_back(quantile_sorted(sorted, q));
}

}  // namespace

std::vector<double> weight_statistics(const WeightVector& v, const LayerLayout& layout) {
    if (v.data.size() != layout.total)
        throw LengthError("weight_statistics: vector length " + std::to_string(v.data.size()) +
                          " != layout total " + std::to_string(layout.total));
    std::vector<double> out;
    for (const auto& seg : layout.segments) {
        stats7(v.data.data() + seg.w_off, size_t(seg.units) * seg.in_per_unit, out);
        if (seg.has_bias) stats7(v.data.data() + seg.b_off, size_t(seg.units), out);
    }
    return out;
}

std::vector<std::string> weight_statistic_names(const LayerLayout& layout) {
    static const char* kStat[7] = {"mean", "var", "q0", "q25", "q50", "q75", "q100"};
    std::vector<std::string> names;
    for (size_t li = 0; li < layout.segments.size(); ++li) {
        for (const char* s : kStat)
            names.push_back("l" + std::to_string(li) + ".w." + s);
        if (layout.segments[li].has_bias)
            for (const char* s : kStat)
                names.push_back("l" + std::to_string(li) + ".b." + s);
    }
    return names;
}

}  // namespace hz
