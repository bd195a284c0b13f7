#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fad/adapter.hpp"
#include "fad/rng.hpp"
#include "fad/tensor.hpp"

// A small convolutional backbone with per-block adapter insertion points.
// Each block is conv3x3 -> (+ adapter residual) -> ReLU -> 2x2 average pool;
// the final map is flattened and L2-normalized into the embedding.

namespace fad {

struct BackboneConfig {
    std::size_t num_blocks = 4;
    std::vector<std::size_t> channels = {8, 16, 16, 32};
    std::size_t input_channels = 1;
    std::size_t input_size = 32;  // square H = W

    void validate() const {
        if (num_blocks < 1) throw std::invalid_argument("backbone: num_blocks must be >= 1");
        if (channels.size() != num_blocks)
            throw std::invalid_argument("backbone: channels list length " +
                                        std::to_string(channels.size()) + " != num_blocks " +
                                        std::to_string(num_blocks));
        std::size_t s = input_size;
        for (std::size_t b = 0; b < num_blocks; ++b) {
            if (s % 2 != 0)
                throw std::invalid_argument(
                    "backbone: input size must halve cleanly at every block, stuck at " +
                    std::to_string(s));
            s /= 2;
        }
    }

    std::size_t block_in_channels(std::size_t b) const {
        return b == 0 ? input_channels : channels[b - 1];
    }
    std::size_t block_out_channels(std::size_t b) const { return channels[b]; }
    // Spatial side length seen at the input of block b.
    std::size_t block_input_size(std::size_t b) const { return input_size >> b; }
    std::size_t embedding_dim() const {
        const std::size_t side = input_size >> num_blocks;
        return channels.back() * side * side;
    }
};

struct BackboneParams {
    BackboneConfig config;
    std::vector<ConvKernelSet> blocks;  // 3x3, with bias
    bool frozen = false;
    std::uint64_t seed = 0;

    std::vector<double> flatten() const {
        std::vector<double> flat;
        for (const auto& b : blocks) {
            flat.insert(flat.end(), b.weights.begin(), b.weights.end());
            flat.insert(flat.end(), b.bias.begin(), b.bias.end());
        }
        return flat;
    }
};

// Which blocks host an adapter.
struct InsertionMask {
    std::vector<bool> enabled;

    static InsertionMask all(std::size_t num_blocks, bool on = true) {
        InsertionMask m;
        m.enabled.assign(num_blocks, on);
        return m;
    }
    static InsertionMask single(std::size_t num_blocks, std::size_t block) {
        InsertionMask m;
        m.enabled.assign(num_blocks, false);
        m.enabled.at(block) = true;
        return m;
    }
    bool any() const {
        for (bool b : enabled)
            if (b) return true;
        return false;
    }
};

// Seeded He-style initialization; pretraining starts here and epochs = 0
// returns exactly this.
inline BackboneParams init_backbone(const BackboneConfig& config, std::uint64_t seed) {
    config.validate();
    BackboneParams p;
    p.config = config;
    p.seed = seed;
    Rng rng(mix_seed(seed, 0x6261636bULL));
    for (std::size_t b = 0; b < config.num_blocks; ++b) {
        auto ks = ConvKernelSet::zeros(config.block_out_channels(b), config.block_in_channels(b),
                                       3, /*with_bias=*/true);
        const double std_dev =
            std::sqrt(2.0 / static_cast<double>(ks.in_channels * ks.k * ks.k));
        for (double& w : ks.weights) w = std_dev * rng.next_gaussian();
        p.blocks.push_back(std::move(ks));
    }
    return p;
}

inline Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values) v = v > 0.0 ? v : 0.0;
    return out;
}

inline Tensor avg_pool2(const Tensor& x) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("avg_pool2: spatial size must be even, got " +
                         detail::shape_str(x.shape));
    Tensor out({c, h / 2, w / 2});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h / 2; ++i)
            for (std::size_t j = 0; j < w / 2; ++j)
                out.at(ch, i, j) = 0.25 * (x.at(ch, 2 * i, 2 * j) + x.at(ch, 2 * i, 2 * j + 1) +
                                           x.at(ch, 2 * i + 1, 2 * j) +
                                           x.at(ch, 2 * i + 1, 2 * j + 1));
    return out;
}

inline Tensor l2_normalize(const Tensor& x) {
    double norm = 0.0;
    for (double v : x.values) norm += v * v;
    norm = std::sqrt(norm);
    Tensor out = x;
    if (norm > 0.0)
        for (double& v : out.values) v /= norm;
    return out;
}

// Forward pass through the frozen backbone, optionally with adapters. When an
// adapter is present and enabled for a block, it reads the block input and
// its output is added to the conv output before the nonlinearity.
inline Tensor backbone_forward(const Tensor& x, const BackboneParams& params,
                               const std::vector<AdapterParams>* adapters = nullptr,
                               const InsertionMask* mask = nullptr,
                               const FadConfig* fad_config = nullptr) {
    const BackboneConfig& cfg = params.config;
    if (x.rank() != 3 || x.dim(0) != cfg.input_channels || x.dim(1) != cfg.input_size ||
        x.dim(2) != cfg.input_size)
        throw ShapeError("backbone_forward: input " + detail::shape_str(x.shape) +
                         " does not match configured size");
    Tensor h = x;
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
        Tensor conv_out = conv2d_same(h, params.blocks[b]);
        const bool use_adapter = mask != nullptr && mask->enabled.at(b);
        if (use_adapter) {
            if (adapters == nullptr || adapters->size() <= b)
                throw std::invalid_argument("backbone_forward: adapter missing for enabled block " +
                                            std::to_string(b));
            const AdapterParams& ap = (*adapters)[b];
            const FadConfig cfg_fad = fad_config ? *fad_config : FadConfig{};
            conv_out = residual_apply(conv_out, adapter_forward(h, ap, cfg_fad));
        }
        h = avg_pool2(relu(conv_out));
    }
    Tensor flat;
    flat.shape = {h.size()};
    flat.values = std::move(h.values);
    return l2_normalize(flat);
}

}  // namespace fad
