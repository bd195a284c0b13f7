#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fad/spectral.hpp"
#include "fad/tensor.hpp"

// The frequency diversion adapter and its two ablation baselines. All three
// variants are residual modules: their output is added to the output of the
// frozen layer they shadow.
//
//   Fad             : band-decompose the input, run one convolution per band,
//                     sum the three results.
//   Linear1x1       : a single 1x1 convolution on the raw input.
//   BandwiseSpatial : the same three branch convolutions as Fad applied
//                     directly to the raw input (no frequency transform),
//                     summed. Parameter count is identical to Fad.

namespace fad {

enum class AdapterVariant { Fad, Linear1x1, BandwiseSpatial };

inline const char* variant_name(AdapterVariant v) {
    switch (v) {
        case AdapterVariant::Fad: return "fad";
        case AdapterVariant::Linear1x1: return "linear1x1";
        default: return "bandwise";
    }
}

inline AdapterVariant variant_from_name(const std::string& s) {
    if (s == "fad") return AdapterVariant::Fad;
    if (s == "linear1x1") return AdapterVariant::Linear1x1;
    if (s == "bandwise") return AdapterVariant::BandwiseSpatial;
    throw std::invalid_argument("unknown adapter variant: " + s);
}

// Band thresholds plus per-branch kernel sizes. The default asymmetric sizes
// give the high-frequency branch the widest spatial support.
struct FadConfig {
    BandThresholds thresholds;
    std::size_t k_low = 3;
    std::size_t k_mid = 3;
    std::size_t k_high = 5;
    bool use_bias = false;

    void validate() const {
        thresholds.validate();
        for (std::size_t k : {k_low, k_mid, k_high})
            if (k % 2 == 0 || k < 1)
                throw std::invalid_argument("adapter kernel sizes must be odd and >= 1, got " +
                                            std::to_string(k));
    }
};

// Trainable state of one adapter. Fad and BandwiseSpatial hold the low, mid
// and high branch kernels in that order; Linear1x1 holds a single 1x1 set.
struct AdapterParams {
    AdapterVariant variant = AdapterVariant::Fad;
    std::vector<ConvKernelSet> branches;

    const ConvKernelSet& conv_low() const { return branches.at(0); }
    const ConvKernelSet& conv_mid() const { return branches.at(1); }
    const ConvKernelSet& conv_high() const { return branches.at(2); }

    std::size_t in_channels() const { return branches.at(0).in_channels; }
    std::size_t out_channels() const { return branches.at(0).out_channels; }
};

// Zero initialization: the adapter is an exact no-op until the first
// optimizer step, so an adapted layer starts out equal to the frozen one.
// The seed is accepted for interface symmetry with the stochastic
// initializers elsewhere; zero init consumes no randomness.
inline AdapterParams init_adapter(std::size_t in_channels, std::size_t out_channels,
                                  const FadConfig& config, AdapterVariant variant,
                                  std::uint64_t seed = 0) {
    (void)seed;
    if (in_channels < 1 || out_channels < 1)
        throw std::invalid_argument("init_adapter: channel counts must be >= 1");
    config.validate();
    AdapterParams p;
    p.variant = variant;
    if (variant == AdapterVariant::Linear1x1) {
        p.branches.push_back(ConvKernelSet::zeros(out_channels, in_channels, 1, config.use_bias));
    } else {
        p.branches.push_back(
            ConvKernelSet::zeros(out_channels, in_channels, config.k_low, config.use_bias));
        p.branches.push_back(
            ConvKernelSet::zeros(out_channels, in_channels, config.k_mid, config.use_bias));
        p.branches.push_back(
            ConvKernelSet::zeros(out_channels, in_channels, config.k_high, config.use_bias));
    }
    return p;
}

inline AdapterParams init_adapter(std::size_t channels, const FadConfig& config,
                                  AdapterVariant variant, std::uint64_t seed = 0) {
    return init_adapter(channels, channels, config, variant, seed);
}

// Conv_low(h_low) + Conv_mid(h_mid) + Conv_high(h_high) over the band
// decomposition of h.
inline Tensor fad_forward(const Tensor& h, const AdapterParams& params, const FadConfig& config) {
    if (params.variant != AdapterVariant::Fad)
        throw std::invalid_argument("fad_forward: params variant is not fad");
    if (h.rank() != 3 || h.dim(0) != params.in_channels())
        throw ShapeError("fad_forward: input " + detail::shape_str(h.shape) +
                         " does not match adapter in_channels " +
                         std::to_string(params.in_channels()));
    const BandDecomposition bands = band_decompose(h, config.thresholds);
    Tensor out = conv2d_same(bands.low, params.conv_low());
    out = add(out, conv2d_same(bands.mid, params.conv_mid()));
    out = add(out, conv2d_same(bands.high, params.conv_high()));
    return out;
}

// The two spatial-domain baselines share this entry point.
inline Tensor baseline_forward(const Tensor& h, const AdapterParams& params) {
    switch (params.variant) {
        case AdapterVariant::Linear1x1:
            return conv2d_same(h, params.branches.at(0));
        case AdapterVariant::BandwiseSpatial: {
            Tensor out = conv2d_same(h, params.conv_low());
            out = add(out, conv2d_same(h, params.conv_mid()));
            out = add(out, conv2d_same(h, params.conv_high()));
            return out;
        }
        default:
            throw std::invalid_argument("baseline_forward: params variant must be linear1x1 or bandwise");
    }
}

inline Tensor adapter_forward(const Tensor& h, const AdapterParams& params,
                              const FadConfig& config) {
    return params.variant == AdapterVariant::Fad ? fad_forward(h, params, config)
                                                 : baseline_forward(h, params);
}

// Residual insertion: adapted layer output = frozen output + adapter output.
inline Tensor residual_apply(const Tensor& block_output, const Tensor& adapter_output) {
    return add(block_output, adapter_output);
}

inline std::size_t param_count(const AdapterParams& params) {
    std::size_t n = 0;
    for (const auto& b : params.branches) n += b.param_count();
    return n;
}

// Flattened view of all trainable scalars, kernel weights per branch in low,
// mid, high order with every bias vector at the end. This ordering is shared
// by the optimizer and the on-disk format.
inline std::vector<double> flatten_params(const AdapterParams& params) {
    std::vector<double> flat;
    flat.reserve(param_count(params));
    for (const auto& b : params.branches)
        flat.insert(flat.end(), b.weights.begin(), b.weights.end());
    for (const auto& b : params.branches) flat.insert(flat.end(), b.bias.begin(), b.bias.end());
    return flat;
}

inline void unflatten_params(const std::vector<double>& flat, AdapterParams& params) {
    if (flat.size() != param_count(params))
        throw ShapeError("unflatten_params: expected " + std::to_string(param_count(params)) +
                         " values, got " + std::to_string(flat.size()));
    std::size_t i = 0;
    for (auto& b : params.branches) {
        std::copy(flat.begin() + i, flat.begin() + i + b.weights.size(), b.weights.begin());
        i += b.weights.size();
    }
    for (auto& b : params.branches) {
        std::copy(flat.begin() + i, flat.begin() + i + b.bias.size(), b.bias.begin());
        i += b.bias.size();
    }
}

}  // namespace fad
