#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fad/adapter.hpp"
#include "fad/backbone.hpp"
#include "fad/io.hpp"

// On-disk formats: every checkpoint is a flat little-endian float64 array
// (<base>.bin) next to a JSON sidecar (<base>.json) describing the layout.

namespace fad {

using json = nlohmann::json;

inline json fad_config_to_json(const FadConfig& cfg) {
    return json{{"r1", cfg.thresholds.r1},
                {"r2", cfg.thresholds.r2},
                {"k_low", cfg.k_low},
                {"k_mid", cfg.k_mid},
                {"k_high", cfg.k_high},
                {"use_bias", cfg.use_bias}};
}

inline FadConfig fad_config_from_json(const json& j) {
    FadConfig cfg;
    cfg.thresholds.r1 = j.at("r1").get<double>();
    cfg.thresholds.r2 = j.at("r2").get<double>();
    cfg.k_low = j.at("k_low").get<std::size_t>();
    cfg.k_mid = j.at("k_mid").get<std::size_t>();
    cfg.k_high = j.at("k_high").get<std::size_t>();
    cfg.use_bias = j.at("use_bias").get<bool>();
    cfg.validate();
    return cfg;
}

// ---- backbone checkpoints ----

inline void save_backbone(const std::string& base, const BackboneParams& params) {
    write_f64_array(base + ".bin", params.flatten());
    json sidecar;
    sidecar["format"] = "fad-backbone-v1";
    sidecar["seed"] = params.seed;
    sidecar["frozen"] = params.frozen;
    sidecar["config"] = {{"num_blocks", params.config.num_blocks},
                         {"channels", params.config.channels},
                         {"input_channels", params.config.input_channels},
                         {"input_size", params.config.input_size}};
    json order = json::array();
    for (std::size_t b = 0; b < params.config.num_blocks; ++b) {
        order.push_back("block" + std::to_string(b) + ".weights");
        order.push_back("block" + std::to_string(b) + ".bias");
    }
    sidecar["tensor_order"] = order;
    write_text_file(base + ".json", sidecar.dump(2) + "\n");
}

inline BackboneParams load_backbone(const std::string& base) {
    const json sidecar = json::parse(read_text_file(base + ".json"));
    if (sidecar.at("format").get<std::string>() != "fad-backbone-v1")
        throw std::runtime_error("load_backbone: unknown format in " + base + ".json");
    BackboneConfig cfg;
    const json& jc = sidecar.at("config");
    cfg.num_blocks = jc.at("num_blocks").get<std::size_t>();
    cfg.channels = jc.at("channels").get<std::vector<std::size_t>>();
    cfg.input_channels = jc.at("input_channels").get<std::size_t>();
    cfg.input_size = jc.at("input_size").get<std::size_t>();
    cfg.validate();

    BackboneParams params;
    params.config = cfg;
    params.seed = sidecar.at("seed").get<std::uint64_t>();
    params.frozen = sidecar.at("frozen").get<bool>();

    const std::vector<double> flat = read_f64_array(base + ".bin");
    std::size_t off = 0;
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
        auto ks = ConvKernelSet::zeros(cfg.block_out_channels(b), cfg.block_in_channels(b), 3,
                                       /*with_bias=*/true);
        if (off + ks.weights.size() + ks.bias.size() > flat.size())
            throw std::runtime_error("load_backbone: checkpoint too short");
        std::copy(flat.begin() + off, flat.begin() + off + ks.weights.size(),
                  ks.weights.begin());
        off += ks.weights.size();
        std::copy(flat.begin() + off, flat.begin() + off + ks.bias.size(), ks.bias.begin());
        off += ks.bias.size();
        params.blocks.push_back(std::move(ks));
    }
    if (off != flat.size())
        throw std::runtime_error("load_backbone: checkpoint has " + std::to_string(flat.size()) +
                                 " values, layout consumes " + std::to_string(off));
    return params;
}

// ---- adapter checkpoints ----

inline void save_adapter(const std::string& base, const AdapterParams& params,
                         const FadConfig& cfg) {
    write_f64_array(base + ".bin", flatten_params(params));
    json sidecar;
    sidecar["format"] = "fad-adapter-v1";
    sidecar["variant"] = variant_name(params.variant);
    sidecar["config"] = fad_config_to_json(cfg);
    sidecar["in_channels"] = params.in_channels();
    sidecar["out_channels"] = params.out_channels();
    json order = json::array();
    const std::vector<std::string> names =
        params.variant == AdapterVariant::Linear1x1
            ? std::vector<std::string>{"conv"}
            : std::vector<std::string>{"conv_low", "conv_mid", "conv_high"};
    for (const auto& n : names) order.push_back(n + ".weights");
    if (!params.branches[0].bias.empty())
        for (const auto& n : names) order.push_back(n + ".bias");
    sidecar["tensor_order"] = order;
    write_text_file(base + ".json", sidecar.dump(2) + "\n");
}

inline AdapterParams load_adapter(const std::string& base, FadConfig* config_out = nullptr) {
    const json sidecar = json::parse(read_text_file(base + ".json"));
    if (sidecar.at("format").get<std::string>() != "fad-adapter-v1")
        throw std::runtime_error("load_adapter: unknown format in " + base + ".json");
    const FadConfig cfg = fad_config_from_json(sidecar.at("config"));
    if (config_out) *config_out = cfg;
    AdapterParams params = init_adapter(sidecar.at("in_channels").get<std::size_t>(),
                                        sidecar.at("out_channels").get<std::size_t>(), cfg,
                                        variant_from_name(sidecar.at("variant").get<std::string>()));
    const std::vector<double> flat = read_f64_array(base + ".bin");
    unflatten_params(flat, params);
    return params;
}

}  // namespace fad
