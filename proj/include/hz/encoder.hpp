#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hz/arch.hpp"
#include "hz/ops.hpp"
#include "hz/rng.hpp"

namespace hz {

enum class Tokenization { per_weight, per_neuron };

Tokenization tokenization_from_string(const std::string& s);
const char* tokenization_name(Tokenization t);

// Attention autoencoder over flat weight vectors. The bottleneck is the
// latent code z of length latent_dim, strictly smaller than the vector
// length. Per-weight tokenization turns every scalar into a token and is
// only allowed on small layouts; per-neuron packs each unit's incoming
// weights plus bias into one token, zero-padded to the layout's widest
// slice.
struct EncoderConfig {
    Tokenization tokenization = Tokenization::per_neuron;
    bool use_compression_token = true;
    int blocks = 2;
    int heads = 1;
    int token_dim = 128;
    int ffn_dim = 512;
    int latent_dim = 50;
    double dropout = 0.1;
    uint64_t seed = 1;

    void validate(const LayerLayout& layout) const;
};

// Per-weight tokenization gets expensive fast (attention is quadratic in
// sequence length); refuse layouts past this size.
inline constexpr size_t kPerWeightMaxInput = 512;

template <class S>
struct ParamStoreT {
    std::vector<std::pair<std::string, TensorT<S>>> items;

    TensorT<S>& add(const std::string& name, TensorT<S> t) {
        items.emplace_back(name, std::move(t));
        return items.back().second;
    }
    TensorT<S>& at(const std::string& name) {
        for (auto& [n, t] : items)
            if (n == name) return t;
        throw ConfigError("no parameter named " + name);
    }
    const TensorT<S>& at(const std::string& name) const {
        return const_cast<ParamStoreT*>(this)->at(name);
    }
    std::vector<TensorT<S>> tensors() const {
        std::vector<TensorT<S>> out;
        out.reserve(items.size());
        for (const auto& [n, t] : items) out.push_back(t);
        return out;
    }
    size_t total() const {
        size_t c = 0;
        for (const auto& [n, t] : items) c += t.numel();
        return c;
    }
};

// One encoded checkpoint.
struct HyperRep {
    int model_id = -1;
    int epoch = -1;
    std::vector<float> z;
};

namespace detail {

template <class S>
void init_param(TensorT<S>& t, const std::string& name, uint64_t seed) {
    RngStream rng = RngStream::root(seed).derive("hyperrep").derive(name);
    S* p = t.data();
    const size_t n = t.numel();
    const bool is_weight = name.size() > 2 && name.compare(name.size() - 2, 2, ".w") == 0;
    const bool is_gain = name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0;
    const bool is_table = name == "pos" || name == "comp" || name == "queries";
    if (is_weight) {
        const int fan_in = t.dim(t.rank() - 1);
        const double bound = 1.0 / std::sqrt(double(fan_in));
        for (size_t i = 0; i < n; ++i) p[i] = S(rng.uniform(-bound, bound));
    } else if (is_table) {
        for (size_t i = 0; i < n; ++i) p[i] = S(rng.normal(0.0, 0.02));
    } else if (is_gain) {
        for (size_t i = 0; i < n; ++i) p[i] = S(1);
    } else {
        for (size_t i = 0; i < n; ++i) p[i] = S(0);
    }
}

}  // namespace detail

// The full encode/decode/project parameter set plus forward passes. Scalar
// type is a template so gradient tests can run the whole model in double.
template <class S>
struct HyperRepT {
    EncoderConfig cfg;
    LayerLayout layout;
    std::vector<int32_t> slice_map;  // token t, position k -> flat index (or -1 pad)
    int seq = 0;    // content tokens (compression token excluded)
    int slice = 0;  // values per token before the lift
    ParamStoreT<S> params;

    HyperRepT() = default;
    HyperRepT(const EncoderConfig& c, const LayerLayout& lay) : cfg(c), layout(lay) {
        cfg.validate(layout);
        if (cfg.tokenization == Tokenization::per_weight) {
            seq = int(layout.total);
            slice = 1;
            slice_map.resize(layout.total);
            for (size_t i = 0; i < layout.total; ++i) slice_map[i] = int32_t(i);
        } else {
            seq = layout.token_count;
            slice = layout.max_slice_len;
            slice_map = unit_slice_map(layout);
        }
        build_params();
    }

    int latent_dim() const { return cfg.latent_dim; }
    int input_dim() const { return int(layout.total); }

    // [batch, N] -> [batch, latent]
    TensorT<S> encode(const TensorT<S>& v, bool training, RngStream& rng) const {
        const int batch = v.dim(0);
        auto x = gather_slices(v, slice_map, seq, slice);
        auto t = linear(x, params.at("lift.w"), params.at("lift.b"));
        t = add_broadcast_seq(t, params.at("pos"), batch);
        int s = seq;
        if (cfg.use_compression_token) {
            t = prepend_token(t, params.at("comp"), batch, seq);
            s = seq + 1;
        }
        t = run_blocks(t, "enc", batch, s, training, rng);
        t = layer_norm(t, params.at("enc.final.g"), params.at("enc.final.b"));
        if (cfg.use_compression_token) {
            auto first = take_first_per_seq(t, batch, s);
            return linear(first, params.at("latent.w"), params.at("latent.b"));
        }
        auto flat = reshape(t, {batch, seq * cfg.token_dim});
        return linear(flat, params.at("latent.w"), params.at("latent.b"));
    }

    // [batch, latent] -> [batch, N]
    TensorT<S> decode(const TensorT<S>& z, bool training, RngStream& rng) const {
        const int batch = z.dim(0);
        TensorT<S> t;
        if (cfg.use_compression_token) {
            auto e = linear(z, params.at("expand.w"), params.at("expand.b"));
            t = expand_latent(e, params.at("queries"));
        } else {
            auto e = linear(z, params.at("expand.w"), params.at("expand.b"));
            t = reshape(e, {batch * seq, cfg.token_dim});
        }
        t = run_blocks(t, "dec", batch, seq, training, rng);
        t = layer_norm(t, params.at("dec.final.g"), params.at("dec.final.b"));
        auto y = linear(t, params.at("out.w"), params.at("out.b"));
        return scatter_slices(y, slice_map, seq, slice, int(layout.total));
    }

    // [batch, latent] -> [batch, 64], rows unit-norm
    TensorT<S> project(const TensorT<S>& z) const {
        auto h = linear(z, params.at("proj1.w"), params.at("proj1.b"));
        h = activation(h, Act::relu);
        h = linear(h, params.at("proj2.w"), params.at("proj2.b"));
        return l2_normalize_rows(h);
    }

    TensorT<S> encode_eval(const TensorT<S>& v) const {
        NoGradGuard off;
        RngStream unused = RngStream::root(0);
        return encode(v, false, unused);
    }

    TensorT<S> decode_eval(const TensorT<S>& z) const {
        NoGradGuard off;
        RngStream unused = RngStream::root(0);
        return decode(z, false, unused);
    }

    std::vector<std::vector<S>> snapshot_values() const {
        std::vector<std::vector<S>> out;
        out.reserve(params.items.size());
        for (const auto& [n, t] : params.items) out.push_back(t.values());
        return out;
    }

    void restore_values(const std::vector<std::vector<S>>& snap) {
        if (snap.size() != params.items.size())
            throw StateError("parameter snapshot does not match model");
        for (size_t i = 0; i < snap.size(); ++i) {
            TensorT<S>& t = params.items[i].second;
            if (snap[i].size() != t.numel())
                throw StateError("parameter snapshot shape mismatch");
            std::copy(snap[i].begin(), snap[i].end(), t.data());
        }
    }

private:
    void build_params() {
        const int D = cfg.token_dim;
        const int F = cfg.ffn_dim;
        const int L = cfg.latent_dim;
        auto add = [&](const std::string& name, std::vector<int> shape) {
            auto t = TensorT<S>::zeros(std::move(shape));
            detail::init_param(t, name, cfg.seed);
            t.set_requires_grad(true);
            params.add(name, std::move(t));
        };
        add("lift.w", {D, slice});
        add("lift.b", {D});
        add("pos", {seq, D});
        if (cfg.use_compression_token) add("comp", {D});
        auto add_blocks = [&](const char* prefix) {
            for (int b = 0; b < cfg.blocks; ++b) {
                const std::string p = std::string(prefix) + std::to_string(b);
                add(p + ".ln1.g", {D});
                add(p + ".ln1.b", {D});
                add(p + ".q.w", {D, D});
                add(p + ".q.b", {D});
                add(p + ".k.w", {D, D});
                add(p + ".k.b", {D});
                add(p + ".v.w", {D, D});
                add(p + ".v.b", {D});
                add(p + ".o.w", {D, D});
                add(p + ".o.b", {D});
                add(p + ".ln2.g", {D});
                add(p + ".ln2.b", {D});
                add(p + ".ffn1.w", {F, D});
                add(p + ".ffn1.b", {F});
                add(p + ".ffn2.w", {D, F});
                add(p + ".ffn2.b", {D});
            }
        };
        add_blocks("enc");
        add("enc.final.g", {D});
        add("enc.final.b", {D});
        if (cfg.use_compression_token)
            add("latent.w", {L, D});
        else
            add("latent.w", {L, seq * D});
        add("latent.b", {L});
        if (cfg.use_compression_token) {
            add("expand.w", {D, L});
            add("expand.b", {D});
            add("queries", {seq, D});
        } else {
            add("expand.w", {seq * D, L});
            add("expand.b", {seq * D});
        }
        add_blocks("dec");
        add("dec.final.g", {D});
        add("dec.final.b", {D});
        add("out.w", {slice, D});
        add("out.b", {slice});
        add("proj1.w", {D, L});
        add("proj1.b", {D});
        add("proj2.w", {64, D});
        add("proj2.b", {64});
    }

    TensorT<S> run_blocks(TensorT<S> t, const char* prefix, int batch, int s, bool training,
                          RngStream& rng) const {
        for (int b = 0; b < cfg.blocks; ++b) {
            const std::string p = std::string(prefix) + std::to_string(b);
            auto h = layer_norm(t, params.at(p + ".ln1.g"), params.at(p + ".ln1.b"));
            auto q = linear(h, params.at(p + ".q.w"), params.at(p + ".q.b"));
            auto k = linear(h, params.at(p + ".k.w"), params.at(p + ".k.b"));
            auto v = linear(h, params.at(p + ".v.w"), params.at(p + ".v.b"));
            auto a = attention_mix(q, k, v, batch, s, cfg.heads);
            a = linear(a, params.at(p + ".o.w"), params.at(p + ".o.b"));
            a = dropout(a, cfg.dropout, training, rng);
            t = add(t, a);
            auto h2 = layer_norm(t, params.at(p + ".ln2.g"), params.at(p + ".ln2.b"));
            auto f = linear(h2, params.at(p + ".ffn1.w"), params.at(p + ".ffn1.b"));
            f = activation(f, Act::gelu);
            f = linear(f, params.at(p + ".ffn2.w"), params.at(p + ".ffn2.b"));
            f = dropout(f, cfg.dropout, training, rng);
            t = add(t, f);
        }
        return t;
    }
};

using HyperRepModel = HyperRepT<float>;

// Rows = vectors, shape [n, N].
template <class S>
TensorT<S> batch_from_rows(const std::vector<const WeightVector*>& rows) {
    if (rows.empty()) throw BatchError("batch_from_rows: empty batch");
    const size_t n = rows[0]->data.size();
    auto t = TensorT<S>::zeros({int(rows.size()), int(n)});
    S* p = t.data();
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r]->data.size() != n)
            throw LengthError("batch_from_rows: ragged batch");
        for (size_t j = 0; j < n; ++j) p[r * n + j] = S(rows[r]->data[j]);
    }
    return t;
}

// Serialization: binary bundle with a JSON config header. Layout hash is
// stored and checked on load.
void save_hyperrep(const std::string& path, const HyperRepModel& model);
HyperRepModel load_hyperrep(const std::string& path, const LayerLayout& layout);

std::string encoder_config_json(const EncoderConfig& cfg, uint64_t layout_hash);
EncoderConfig encoder_config_from_json(const std::string& text, uint64_t* layout_hash_out);

}  // namespace hz
