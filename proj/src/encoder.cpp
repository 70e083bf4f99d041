#include "hz/encoder.hpp"

#include <json.hpp>

#include "hz/checkpoint.hpp"

using nlohmann::json;

namespace hz {

Tokenization tokenization_from_string(const std::string& s) {
    if (s == "per_weight" || s == "per-weight") return Tokenization::per_weight;
    if (s == "per_neuron" || s == "per-neuron") return Tokenization::per_neuron;
    throw ConfigError("unknown tokenization: " + s);
}

const char* tokenization_name(Tokenization t) {
    return t == Tokenization::per_weight ? "per_weight" : "per_neuron";
}

void EncoderConfig::validate(const LayerLayout& layout) const {
    if (blocks < 1) throw ConfigError("encoder: blocks must be >= 1");
    if (heads < 1) throw ConfigError("encoder: heads must be >= 1");
    if (token_dim < 1 || ffn_dim < 1) throw ConfigError("encoder: dims must be >= 1");
    if (token_dim % heads != 0) throw ConfigError("encoder: token_dim must divide into heads");
    if (latent_dim < 1) throw ConfigError("encoder: latent_dim must be >= 1");
    if (size_t(latent_dim) >= layout.total)
        throw ConfigError("encoder: latent_dim " + std::to_string(latent_dim) +
                          " does not compress input of size " + std::to_string(layout.total));
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder: dropout must be in [0, 1)");
    if (tokenization == Tokenization::per_weight && layout.total > kPerWeightMaxInput)
        throw ConfigError("encoder: per-weight tokens limited to inputs of at most " +
                          std::to_string(kPerWeightMaxInput) + " values, layout has " +
                          std::to_string(layout.total));
}

std::string encoder_config_json(const EncoderConfig& cfg, uint64_t layout_hash) {
    char hash[19];
    std::snprintf(hash, sizeof hash, "0x%016llx", (unsigned long long)layout_hash);
    json j{{"tokenization", tokenization_name(cfg.tokenization)},
           {"compression_token", cfg.use_compression_token},
           {"blocks", cfg.blocks},
           {"heads", cfg.heads},
           {"token_dim", cfg.token_dim},
           {"ffn_dim", cfg.ffn_dim},
           {"latent_dim", cfg.latent_dim},
           {"dropout", cfg.dropout},
           {"seed", cfg.seed},
           {"layout_hash", hash}};
    return j.dump();
}

EncoderConfig encoder_config_from_json(const std::string& text, uint64_t* layout_hash_out) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("encoder config: invalid json: ") + e.what());
    }
    try {
        EncoderConfig cfg;
        cfg.tokenization = tokenization_from_string(j.at("tokenization").get<std::string>());
        cfg.use_compression_token = j.at("compression_token").get<bool>();
        cfg.blocks = j.at("blocks").get<int>();
        cfg.heads = j.at("heads").get<int>();
        cfg.token_dim = j.at("token_dim").get<int>();
        cfg.ffn_dim = j.at("ffn_dim").get<int>();
        cfg.latent_dim = j.at("latent_dim").get<int>();
        cfg.dropout = j.at("dropout").get<double>();
        cfg.seed = j.at("seed").get<uint64_t>();
        if (layout_hash_out)
            *layout_hash_out = std::stoull(j.at("layout_hash").get<std::string>(), nullptr, 16);
        return cfg;
    } catch (const json::exception& e) {
        throw FormatError(std::string("encoder config: missing field: ") + e.what());
    }
}

void save_hyperrep(const std::string& path, const HyperRepModel& model) {
    std::vector<std::pair<std::string, const Tensor*>> arrays;
    arrays.reserve(model.params.items.size());
    for (const auto& [name, t] : model.params.items) arrays.emplace_back(name, &t);
    save_bundle(path, encoder_config_json(model.cfg, model.layout.hash), arrays);
}

HyperRepModel load_hyperrep(const std::string& path, const LayerLayout& layout) {
    Bundle b = load_bundle(path);
    uint64_t hash = 0;
    EncoderConfig cfg = encoder_config_from_json(b.config, &hash);
    if (hash != layout.hash)
        throw ConsistencyError("encoder bundle was trained for a different layout");
    HyperRepModel model(cfg, layout);
    if (b.arrays.size() != model.params.items.size())
        throw ConsistencyError("encoder bundle: parameter count mismatch");
    for (const NamedArray& arr : b.arrays) {
        Tensor& t = model.params.at(arr.name);
        if (arr.data.size() != t.numel())
            throw ConsistencyError("encoder bundle: size mismatch for " + arr.name);
        std::copy(arr.data.begin(), arr.data.end(), t.data());
    }
    return model;
}

}  // namespace hz
