#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fad/rng.hpp"
#include "fad/spectral.hpp"
#include "fad/tensor.hpp"

// Synthetic spectral-shift domains and the episodic sampler.
//
// A domain is described by a radial spectral envelope plus per-class band
// signatures: each class occupies a set of annuli in the centered spectrum,
// with seeded class-characteristic phases. Images are drawn by jittering the
// phases, optionally mixing in a shared clutter annulus with fully random
// phases, inverting to the spatial domain, and adding white noise. Two
// domains whose classes occupy different bands realize a controlled spectral
// domain shift.

namespace fad {

struct LabeledImage {
    Tensor image;  // C x H x W
    int label = 0;
};

using Dataset = std::vector<LabeledImage>;

struct Annulus {
    double r_lo = 0.0;
    double r_hi = 0.0;
    double magnitude = 0.0;

    bool contains(double d) const { return r_lo < d && d <= r_hi; }
};

struct ClassSignature {
    std::vector<Annulus> annuli;
};

struct DomainSpec {
    std::size_t height = 32;
    std::size_t width = 32;
    double envelope_exponent = 1.0;  // magnitude ~ (1 + d)^(-exponent)
    std::vector<int> class_ids;
    std::vector<ClassSignature> signatures;  // parallel to class_ids
    double phase_jitter = 0.6;               // radians, per image per coefficient
    double noise_level = 0.02;               // white-noise std after signal synthesis
    // Clutter shared by every class of the domain, drawn with fresh random
    // phases for each image. Magnitude 0 disables it.
    Annulus clutter{0.0, 0.0, 0.0};

    void validate() const {
        if (height < 2 || width < 2)
            throw std::invalid_argument("domain: image size must be at least 2x2");
        if (envelope_exponent < 0.0)
            throw std::invalid_argument("domain: envelope exponent must be >= 0");
        if (class_ids.size() != signatures.size())
            throw std::invalid_argument("domain: class id/signature count mismatch");
        const double rmax = std::sqrt(2.0);
        auto check_annulus = [rmax](const Annulus& a) {
            if (a.magnitude == 0.0) return;
            if (!(0.0 <= a.r_lo && a.r_lo < a.r_hi && a.r_hi <= rmax))
                throw std::invalid_argument("domain: annulus [" + std::to_string(a.r_lo) + ", " +
                                            std::to_string(a.r_hi) +
                                            "] outside [0, sqrt(2)] or empty");
        };
        for (const auto& sig : signatures)
            for (const auto& a : sig.annuli) check_annulus(a);
        check_annulus(clutter);
    }

    double envelope(double d) const { return std::pow(1.0 + d, -envelope_exponent); }
};

namespace detail {

inline double normalized_distance(std::size_t u, std::size_t v, std::size_t h, std::size_t w) {
    const double u0 = static_cast<double>(h / 2);
    const double v0 = static_cast<double>(w / 2);
    const double du = (static_cast<double>(u) - u0) / u0;
    const double dv = (static_cast<double>(v) - v0) / v0;
    return std::sqrt(du * du + dv * dv);
}

}  // namespace detail

// Draws `per_class` images for the first `classes` signatures of the domain.
// Deterministic: the same (spec, classes, per_class, seed) always produces
// bitwise identical data.
inline Dataset synth_domain_generate(const DomainSpec& spec, std::size_t classes,
                                     std::size_t per_class, std::uint64_t seed) {
    spec.validate();
    if (classes < 1 || classes > spec.signatures.size())
        throw std::invalid_argument("synth_domain_generate: class count " +
                                    std::to_string(classes) + " not available");
    if (per_class < 1) throw std::invalid_argument("synth_domain_generate: per_class must be >= 1");

    const std::size_t h = spec.height, w = spec.width;
    Dataset out;
    out.reserve(classes * per_class);

    for (std::size_t ci = 0; ci < classes; ++ci) {
        // class-characteristic phases, one per grid point
        Rng class_rng(mix_seed(seed, 1000003ULL * (ci + 1)));
        std::vector<double> base_phase(h * w);
        for (double& p : base_phase) p = class_rng.uniform(-3.14159265358979323846, 3.14159265358979323846);

        for (std::size_t img = 0; img < per_class; ++img) {
            Rng rng(mix_seed(seed, (ci + 1) * 1000000ULL + img + 1));
            CTensor spectrum({1, h, w});
            for (std::size_t u = 0; u < h; ++u)
                for (std::size_t v = 0; v < w; ++v) {
                    const double d = detail::normalized_distance(u, v, h, w);
                    double mag = 0.0;
                    for (const Annulus& a : spec.signatures[ci].annuli)
                        if (a.contains(d)) mag += a.magnitude;
                    mag *= spec.envelope(d);
                    const double phase =
                        base_phase[u * w + v] + spec.phase_jitter * rng.uniform(-1.0, 1.0);
                    std::complex<double> z =
                        mag * std::complex<double>{std::cos(phase), std::sin(phase)};
                    if (spec.clutter.magnitude != 0.0 && spec.clutter.contains(d)) {
                        const double cp = rng.uniform(-3.14159265358979323846, 3.14159265358979323846);
                        z += spec.clutter.magnitude * spec.envelope(d) *
                             std::complex<double>{std::cos(cp), std::sin(cp)};
                    }
                    spectrum.at(0, u, v) = z;
                }

            Tensor image = idft2(spectrum).real;  // real part; symmetry not required here

            auto standardize = [](Tensor& t) {
                double mean = 0.0;
                for (double px : t.values) mean += px;
                mean /= static_cast<double>(t.size());
                double var = 0.0;
                for (double& px : t.values) {
                    px -= mean;
                    var += px * px;
                }
                var /= static_cast<double>(t.size());
                if (var > 0.0) {
                    const double inv = 1.0 / std::sqrt(var);
                    for (double& px : t.values) px *= inv;
                }
            };

            // bring the synthesized signal to unit variance first so
            // noise_level acts as a noise-to-signal ratio
            standardize(image);
            if (spec.noise_level != 0.0)
                for (double& px : image.values) px += spec.noise_level * rng.next_gaussian();
            standardize(image);
            out.push_back(LabeledImage{std::move(image), spec.class_ids[ci]});
        }
    }
    return out;
}

// The default desk-scale spectral-shift pair. Source classes live in the low
// and mid bands; target classes sit in narrow high-frequency annuli behind a
// strong low-frequency clutter component, so discriminating them rewards
// suppressing the low band and reshaping the high band.
inline DomainSpec default_source_spec() {
    DomainSpec s;
    s.class_ids = {0, 1, 2, 3};
    s.signatures = {
        ClassSignature{{Annulus{0.02, 0.15, 1.0}}},
        ClassSignature{{Annulus{0.12, 0.25, 1.0}}},
        ClassSignature{{Annulus{0.22, 0.35, 1.0}}},
        ClassSignature{{Annulus{0.32, 0.45, 1.0}}},
    };
    s.phase_jitter = 0.6;
    s.noise_level = 0.02;
    return s;
}

inline DomainSpec default_target_spec() {
    DomainSpec s;
    s.class_ids = {10, 11, 12, 13, 14, 15};
    s.signatures = {
        ClassSignature{{Annulus{0.55, 0.66, 1.0}}},
        ClassSignature{{Annulus{0.64, 0.75, 1.0}}},
        ClassSignature{{Annulus{0.73, 0.84, 1.0}}},
        ClassSignature{{Annulus{0.82, 0.93, 1.0}}},
        ClassSignature{{Annulus{0.91, 1.02, 1.0}}},
        ClassSignature{{Annulus{1.00, 1.11, 1.0}}},
    };
    s.phase_jitter = 0.6;
    s.noise_level = 0.02;
    s.clutter = Annulus{0.02, 0.30, 2.0};
    return s;
}

struct ShiftPair {
    Dataset source;
    Dataset target;
};

// Generates the pretraining set and the meta-test pool of a controlled
// spectral domain shift. Class id spaces must be disjoint.
inline ShiftPair make_shift_pair(const DomainSpec& source_spec, const DomainSpec& target_spec,
                                 std::uint64_t seed, std::size_t source_per_class = 24,
                                 std::size_t target_per_class = 25) {
    for (int sid : source_spec.class_ids)
        for (int tid : target_spec.class_ids)
            if (sid == tid)
                throw std::invalid_argument("make_shift_pair: class id " + std::to_string(sid) +
                                            " appears in both domains");
    ShiftPair pair;
    pair.source = synth_domain_generate(source_spec, source_spec.class_ids.size(),
                                        source_per_class, mix_seed(seed, 0x501ULL));
    pair.target = synth_domain_generate(target_spec, target_spec.class_ids.size(),
                                        target_per_class, mix_seed(seed, 0x7a6ULL));
    return pair;
}

// Mean fraction of spectral energy (DC excluded) in each of the three bands,
// averaged over a dataset. Used to quantify how shifted two domains are.
inline std::array<double, 3> band_energy_profile(const Dataset& data, BandThresholds t = {}) {
    if (data.empty()) throw std::invalid_argument("band_energy_profile: empty dataset");
    const std::size_t h = data[0].image.dim(1), w = data[0].image.dim(2);
    BandMaskSet masks = band_masks(h, w, t);
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (const auto& ex : data) {
        CTensor f = dft2(ex.image);
        const BandMask* ms[3] = {&masks.low, &masks.mid, &masks.high};
        double total = 0.0;
        std::array<double, 3> e{0.0, 0.0, 0.0};
        for (std::size_t ch = 0; ch < f.dim(0); ++ch)
            for (std::size_t u = 0; u < h; ++u)
                for (std::size_t v = 0; v < w; ++v) {
                    if (u == h / 2 && v == w / 2) continue;  // DC
                    const double en = std::norm(f.at(ch, u, v));
                    total += en;
                    for (int b = 0; b < 3; ++b)
                        if (ms[b]->at(u, v)) e[b] += en;
                }
        if (total > 0.0)
            for (int b = 0; b < 3; ++b) acc[b] += e[b] / total;
    }
    for (double& v : acc) v /= static_cast<double>(data.size());
    return acc;
}

// ---- episodic sampling ----

enum class SamplerMode { VaryingVarying, VaryingFiveShot };

inline const char* sampler_mode_name(SamplerMode m) {
    return m == SamplerMode::VaryingVarying ? "varying_varying" : "varying_fiveshot";
}

inline SamplerMode sampler_mode_from_name(const std::string& s) {
    if (s == "varying_varying") return SamplerMode::VaryingVarying;
    if (s == "varying_fiveshot") return SamplerMode::VaryingFiveShot;
    throw std::invalid_argument("unknown sampler mode: " + s);
}

struct SamplerConfig {
    SamplerMode mode = SamplerMode::VaryingFiveShot;
    std::size_t way_min = 3;
    std::size_t way_max = 6;
    std::size_t max_support = 10;  // per class, varying mode
    std::size_t query_per_class = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (way_min < 2) throw std::invalid_argument("sampler: way_min must be >= 2");
        if (way_max < way_min) throw std::invalid_argument("sampler: way_max < way_min");
        if (max_support < 1 || query_per_class < 1)
            throw std::invalid_argument("sampler: shot caps must be >= 1");
    }
};

struct Episode {
    std::size_t way = 0;
    std::vector<LabeledImage> support;  // labels remapped to 0..way-1
    std::vector<LabeledImage> query;
    std::vector<int> class_ids;             // original id per remapped label
    std::vector<std::size_t> support_pool_ids;  // indices into the pool
    std::vector<std::size_t> query_pool_ids;
};

// Draws one episode. Deterministic in (cfg.seed, episode_index); distinct
// indices give independent episodes.
inline Episode sample_episode(const Dataset& pool, const SamplerConfig& cfg,
                              std::size_t episode_index) {
    cfg.validate();
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool[i].label].push_back(i);
    if (by_class.size() < cfg.way_max)
        throw std::invalid_argument("sample_episode: pool has " +
                                    std::to_string(by_class.size()) + " classes, needs " +
                                    std::to_string(cfg.way_max));

    Rng rng(mix_seed(cfg.seed, episode_index));
    Episode ep;
    ep.way = cfg.way_min + rng.next_below(cfg.way_max - cfg.way_min + 1);

    std::vector<int> class_list;
    for (const auto& [label, ids] : by_class) class_list.push_back(label);
    // Fisher-Yates with the episode stream, then take the first `way` classes
    for (std::size_t i = class_list.size(); i > 1; --i)
        std::swap(class_list[i - 1], class_list[rng.next_below(i)]);
    class_list.resize(ep.way);
    ep.class_ids = class_list;

    for (std::size_t c = 0; c < ep.way; ++c) {
        const int original = class_list[c];
        std::vector<std::size_t> ids = by_class[original];
        const std::size_t shots = cfg.mode == SamplerMode::VaryingFiveShot
                                      ? 5
                                      : 1 + rng.next_below(cfg.max_support);
        if (ids.size() < shots + cfg.query_per_class)
            throw std::invalid_argument("sample_episode: class " + std::to_string(original) +
                                        " has " + std::to_string(ids.size()) +
                                        " examples, needs " +
                                        std::to_string(shots + cfg.query_per_class));
        for (std::size_t i = ids.size(); i > 1; --i)
            std::swap(ids[i - 1], ids[rng.next_below(i)]);
        for (std::size_t s = 0; s < shots; ++s) {
            ep.support.push_back(LabeledImage{pool[ids[s]].image, static_cast<int>(c)});
            ep.support_pool_ids.push_back(ids[s]);
        }
        for (std::size_t q = 0; q < cfg.query_per_class; ++q) {
            ep.query.push_back(
                LabeledImage{pool[ids[shots + q]].image, static_cast<int>(c)});
            ep.query_pool_ids.push_back(ids[shots + q]);
        }
    }
    return ep;
}

}  // namespace fad
