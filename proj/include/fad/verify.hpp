#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fad/adapter.hpp"
#include "fad/backbone.hpp"
#include "fad/episodes.hpp"
#include "fad/ncc.hpp"
#include "fad/optimizer.hpp"
#include "fad/results.hpp"
#include "fad/rng.hpp"
#include "fad/spectral.hpp"
#include "fad/train.hpp"

// Self-contained property suite behind the `verify` subcommand. Every
// invariant the library promises is checked here with a measured value
// against its tolerance; the report is machine-readable.

namespace fad {

struct PropertyResult {
    std::string id;
    bool pass = false;
    double measured = 0.0;   // worst observed value
    double tolerance = 0.0;  // pass iff measured <= tolerance (see cmp)
    std::string detail;
};

struct VerifyOptions {
    // Multiplies the 1/(W*H) factor of the inverse transform used by the
    // round-trip property. Exists so tests can inject a broken normalization
    // (-1) and watch the property fail; production behavior is +1.
    double idft_scale_sign = 1.0;
};

namespace detail {

inline Tensor vrandom(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
    return t;
}

inline PropertyResult bounded(std::string id, double measured, double tolerance,
                              std::string detail = "") {
    PropertyResult r;
    r.id = std::move(id);
    r.measured = measured;
    r.tolerance = tolerance;
    r.pass = measured <= tolerance;
    r.detail = std::move(detail);
    return r;
}

inline PropertyResult boolean(std::string id, bool pass, std::string detail = "") {
    PropertyResult r;
    r.id = std::move(id);
    r.pass = pass;
    r.measured = pass ? 0.0 : 1.0;
    r.tolerance = 0.0;
    r.detail = std::move(detail);
    return r;
}

struct VerifyFixture {
    BackboneParams backbone;
    Episode episode;
    EpisodeRunConfig run;
};

inline VerifyFixture small_episode_fixture(std::uint64_t seed) {
    BackboneConfig cfg;
    cfg.num_blocks = 2;
    cfg.channels = {4, 8};
    cfg.input_channels = 1;
    cfg.input_size = 8;

    DomainSpec spec;
    spec.height = spec.width = 8;
    spec.class_ids = {0, 1, 2};
    spec.signatures = {ClassSignature{{Annulus{0.45, 0.65, 1.0}}},
                       ClassSignature{{Annulus{0.6, 0.8, 1.0}}},
                       ClassSignature{{Annulus{0.75, 0.95, 1.0}}}};
    spec.noise_level = 0.3;
    spec.clutter = Annulus{0.02, 0.3, 2.0};
    Dataset pool = synth_domain_generate(spec, 3, 20, seed);

    SamplerConfig scfg;
    scfg.way_min = scfg.way_max = 3;
    scfg.mode = SamplerMode::VaryingVarying;
    scfg.max_support = 4;
    scfg.query_per_class = 5;
    scfg.seed = seed;

    VerifyFixture fx;
    fx.backbone = init_backbone(cfg, seed);
    fx.backbone.frozen = true;
    fx.episode = sample_episode(pool, scfg, 0);
    fx.run.insertion = InsertionMask::all(cfg.num_blocks);
    return fx;
}

}  // namespace detail

inline std::vector<PropertyResult> verify_properties(VerifyOptions opts = {}) {
    using detail::bounded;
    using detail::boolean;
    using detail::vrandom;

    std::vector<PropertyResult> out;

    // ---- tensor_core ----
    {
        Tensor x = vrandom({2, 6, 6}, 11), y = vrandom({2, 6, 6}, 12);
        auto ks = ConvKernelSet::zeros(3, 2, 3);
        Rng rng(13);
        for (double& w : ks.weights) w = rng.uniform(-1.0, 1.0);
        Tensor lhs = conv2d_same(add(scale(x, 1.3), scale(y, -0.7)), ks);
        Tensor rhs = add(scale(conv2d_same(x, ks), 1.3), scale(conv2d_same(y, ks), -0.7));
        out.push_back(bounded("tensor.conv_linearity", max_abs_diff(lhs, rhs), 1e-12));
    }
    {
        Tensor x = vrandom({2, 5, 7}, 14);
        bool exact = true;
        for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{5}}) {
            auto ks = ConvKernelSet::zeros(2, 2, k);
            for (std::size_t c = 0; c < 2; ++c) ks.w(c, c, k / 2, k / 2) = 1.0;
            Tensor ident = conv2d_same(x, ks);
            for (std::size_t i = 0; i < x.size(); ++i)
                exact = exact && ident.values[i] == x.values[i];
        }
        out.push_back(boolean("tensor.conv_delta_identity", exact, "bitwise, k in {1,3,5}"));
    }
    {
        Tensor a = vrandom({3, 4, 4}, 15), b = vrandom({3, 4, 4}, 16);
        Tensor ab = add(a, b), ba = add(b, a);
        bool exact = true;
        for (std::size_t i = 0; i < ab.size(); ++i) exact = exact && ab.values[i] == ba.values[i];
        out.push_back(boolean("tensor.add_commutative", exact, "bitwise"));
    }

    // ---- spectral ----
    {
        // round trip, via the hook-scaled inverse
        double worst = 0.0;
        for (std::uint64_t s = 0; s < 8; ++s) {
            Tensor h = vrandom({1, 4 + (s % 3), 5 + (s % 4)}, 20 + s);
            CTensor f = dft2(h);
            Tensor rec(h.shape, 0.0);
            const std::size_t hh = h.dim(1), ww = h.dim(2);
            auto plane = detail::idft_plane(&f.values[0], hh, ww, opts.idft_scale_sign);
            std::copy(plane.real.begin(), plane.real.end(), rec.values.begin());
            worst = std::max(worst, max_abs_diff(rec, h) / std::max(1.0, max_abs(h)));
        }
        out.push_back(bounded("spectral.round_trip", worst, 1e-10, "relative L-inf over seeds"));
    }
    {
        double worst = 0.0;
        for (std::uint64_t s = 0; s < 6; ++s) {
            Tensor h = vrandom({2, 5 + (s % 3), 6 + (s % 3)}, 30 + s);
            const double se = spatial_energy(h);
            worst = std::max(worst, std::abs(se - spectral_energy(dft2(h))) / se);
        }
        out.push_back(bounded("spectral.parseval", worst, 1e-10));
    }
    {
        bool exact = true;
        for (auto [hh, ww] : {std::pair<std::size_t, std::size_t>{8, 8},
                              std::pair<std::size_t, std::size_t>{9, 7},
                              std::pair<std::size_t, std::size_t>{6, 13}}) {
            BandMaskSet s = band_masks(hh, ww, BandThresholds{});
            for (std::size_t i = 0; i < hh * ww; ++i) {
                exact = exact && (s.low.values[i] + s.mid.values[i] + s.high.values[i]) == 1;
                exact = exact && (s.low.values[i] & s.mid.values[i]) == 0 &&
                        (s.low.values[i] & s.high.values[i]) == 0 &&
                        (s.mid.values[i] & s.high.values[i]) == 0;
            }
        }
        out.push_back(boolean("spectral.mask_partition", exact, "binary, disjoint, sums to one"));
    }
    {
        double worst = 0.0, worst_res = 0.0;
        for (std::uint64_t s = 0; s < 5; ++s) {
            Tensor h = vrandom({1, 8 + (s % 2), 8 + (s % 3)}, 40 + s);
            BandDecomposition d = band_decompose(h, BandThresholds{});
            Tensor sum = add(add(d.low, d.mid), d.high);
            worst = std::max(worst, max_abs_diff(sum, h));
            worst_res = std::max(worst_res, d.max_imag_residual);
        }
        out.push_back(bounded("spectral.band_completeness", worst, 1e-9));
        out.push_back(bounded("spectral.band_imag_residual", worst_res, 1e-9));
    }
    {
        bool symmetric = true;
        for (auto [hh, ww] : {std::pair<std::size_t, std::size_t>{8, 8},
                              std::pair<std::size_t, std::size_t>{9, 9},
                              std::pair<std::size_t, std::size_t>{9, 8}}) {
            BandMaskSet s = band_masks(hh, ww, BandThresholds{});
            const std::size_t u0 = hh / 2, v0 = ww / 2;
            for (const BandMask* m : {&s.low, &s.mid, &s.high})
                for (std::size_t u = 0; u < hh; ++u)
                    for (std::size_t v = 0; v < ww; ++v) {
                        const std::size_t a = (u + hh - u0) % hh;
                        const std::size_t b = (v + ww - v0) % ww;
                        const std::size_t um = (((hh - a) % hh) + u0) % hh;
                        const std::size_t vm = (((ww - b) % ww) + v0) % ww;
                        symmetric = symmetric && m->at(u, v) == m->at(um, vm);
                    }
        }
        out.push_back(boolean("spectral.mask_mirror_symmetry", symmetric, "even and odd sizes"));
    }
    {
        Tensor k({1, 1});
        k.values[0] = -0.42;
        CTensor tf = kernel_transfer_function(k, 16, 16);
        double mag_lo = 1e300, mag_hi = -1e300, arg_spread = 0.0;
        for (const auto& z : tf.values) {
            mag_lo = std::min(mag_lo, std::abs(z));
            mag_hi = std::max(mag_hi, std::abs(z));
            arg_spread = std::max(arg_spread, std::abs(std::imag(z)));
        }
        out.push_back(bounded("spectral.flat_response_1x1",
                              std::max(mag_hi - mag_lo, arg_spread), 1e-12,
                              "magnitude and phase spread"));
    }
    {
        Tensor k = vrandom({3, 3}, 50);
        CTensor tf = kernel_transfer_function(k, 16, 16);
        double mag_lo = 1e300, mag_hi = -1e300;
        for (const auto& z : tf.values) {
            mag_lo = std::min(mag_lo, std::abs(z));
            mag_hi = std::max(mag_hi, std::abs(z));
        }
        const double spread = mag_hi - mag_lo;
        out.push_back(boolean("spectral.kernel_spread_3x3", spread > 1e-3,
                              "seeded 3x3 spread " + std::to_string(spread)));
    }

    // ---- adapter ----
    {
        FadConfig cfg;
        AdapterParams p = init_adapter(2, cfg, AdapterVariant::Fad, 0);
        Rng rng(60);
        for (auto& br : p.branches)
            for (double& w : br.weights) w = rng.uniform(-0.5, 0.5);
        Tensor h1 = vrandom({2, 8, 8}, 61), h2 = vrandom({2, 8, 8}, 62);
        Tensor lhs = fad_forward(add(scale(h1, 0.9), scale(h2, -1.4)), p, cfg);
        Tensor rhs = add(scale(fad_forward(h1, p, cfg), 0.9), scale(fad_forward(h2, p, cfg), -1.4));
        out.push_back(bounded("adapter.fad_linearity", max_abs_diff(lhs, rhs), 1e-10));
    }
    {
        FadConfig cfg;
        AdapterParams p = init_adapter(2, cfg, AdapterVariant::Fad, 0);
        Rng rng(63);
        for (double& w : p.branches[0].weights) w = rng.uniform(-0.5, 0.5);
        Tensor x = vrandom({2, 8, 8}, 64);
        Tensor h_low = band_decompose(x, cfg.thresholds).low;
        Tensor got = fad_forward(h_low, p, cfg);
        Tensor want = conv2d_same(h_low, p.conv_low());
        out.push_back(bounded("adapter.branch_routing", max_abs_diff(got, want), 1e-9,
                              "pure low-band input routed through conv_low"));
    }
    {
        FadConfig cfg;
        const bool parity = param_count(init_adapter(5, cfg, AdapterVariant::Fad, 0)) ==
                            param_count(init_adapter(5, cfg, AdapterVariant::BandwiseSpatial, 0));
        out.push_back(boolean("adapter.param_budget_parity", parity));
    }
    {
        FadConfig cfg;
        Tensor h = vrandom({3, 8, 8}, 65);
        bool ok = true;
        for (auto v : {AdapterVariant::Fad, AdapterVariant::Linear1x1,
                       AdapterVariant::BandwiseSpatial}) {
            AdapterParams p = init_adapter(3, cfg, v, 0);
            ok = ok && adapter_forward(h, p, cfg).shape == h.shape;
        }
        out.push_back(boolean("adapter.output_shape", ok));
    }

    // ---- backbone ----
    {
        auto fx = detail::small_episode_fixture(70);
        fx.run.stop.max_steps = 3;
        const std::vector<double> before = fx.backbone.flatten();
        (void)finetune_episode(fx.episode, fx.backbone, fx.run, 1);
        out.push_back(boolean("backbone.freeze_bitwise", fx.backbone.flatten() == before,
                              "after adaptation steps"));
    }
    {
        BackboneConfig cfg;
        cfg.num_blocks = 2;
        cfg.channels = {4, 8};
        cfg.input_size = 8;
        BackboneParams params = init_backbone(cfg, 71);
        double worst = 0.0;
        for (std::uint64_t s = 0; s < 4; ++s) {
            Tensor e = backbone_forward(vrandom({1, 8, 8}, 72 + s), params);
            double norm = 0.0;
            for (double v : e.values) norm += v * v;
            worst = std::max(worst, std::abs(std::sqrt(norm) - 1.0));
        }
        out.push_back(bounded("backbone.embedding_norm", worst, 1e-12));
    }
    {
        BackboneConfig cfg;
        cfg.num_blocks = 2;
        cfg.channels = {4, 8};
        cfg.input_size = 8;
        BackboneParams params = init_backbone(cfg, 73);
        FadConfig fad;
        std::vector<AdapterParams> adapters;
        for (std::size_t b = 0; b < cfg.num_blocks; ++b)
            adapters.push_back(init_adapter(cfg.block_in_channels(b), cfg.block_out_channels(b),
                                            fad, AdapterVariant::Fad, 0));
        InsertionMask mask = InsertionMask::all(cfg.num_blocks);
        Tensor x = vrandom({1, 8, 8}, 74);
        Tensor plain = backbone_forward(x, params);
        Tensor adapted = backbone_forward(x, params, &adapters, &mask, &fad);
        bool exact = plain.size() == adapted.size();
        for (std::size_t i = 0; exact && i < plain.size(); ++i)
            exact = plain.values[i] == adapted.values[i];
        out.push_back(boolean("backbone.zero_adapter_noop", exact, "bitwise"));
    }

    // ---- adapt_train ----
    {
        auto fx = detail::small_episode_fixture(80);
        const BackboneConfig& cfg = fx.backbone.config;
        std::vector<AdapterParams> adapters(cfg.num_blocks);
        Rng prng(81);
        std::vector<double> flat;
        for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
            adapters[b] = init_adapter(cfg.block_in_channels(b), cfg.block_out_channels(b),
                                       fx.run.fad, fx.run.variant, 0);
            for (auto& br : adapters[b].branches)
                for (double& w : br.weights) w = 0.1 * prng.next_gaussian();
            const auto part = flatten_params(adapters[b]);
            flat.insert(flat.end(), part.begin(), part.end());
        }
        std::vector<double> analytic;
        support_loss(fx.episode, fx.backbone, adapters, fx.run, &analytic);
        auto set_flat = [&](const std::vector<double>& values) {
            std::size_t off = 0;
            for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
                const std::size_t n = param_count(adapters[b]);
                std::vector<double> part(values.begin() + off, values.begin() + off + n);
                unflatten_params(part, adapters[b]);
                off += n;
            }
        };
        Rng coords(82);
        double worst = 0.0;
        for (int c = 0; c < 12; ++c) {
            const std::size_t i = coords.next_below(flat.size());
            std::vector<double> probe = flat;
            probe[i] = flat[i] + 1e-5;
            set_flat(probe);
            const double hi = support_loss(fx.episode, fx.backbone, adapters, fx.run);
            probe[i] = flat[i] - 1e-5;
            set_flat(probe);
            const double lo = support_loss(fx.episode, fx.backbone, adapters, fx.run);
            set_flat(flat);
            const double fd = (hi - lo) / 2e-5;
            worst = std::max(worst, std::abs(analytic[i] - fd) /
                                        std::max({std::abs(analytic[i]), std::abs(fd), 1e-6}));
        }
        out.push_back(bounded("train.gradcheck_episode", worst, 1e-4,
                              "finite differences on a small episode graph"));
    }
    {
        AdadeltaState st(2);
        st.lr = 0.0;
        std::vector<double> params = {0.5, -0.25};
        const auto before = params;
        adadelta_step(params, {1.0, 2.0}, st);
        out.push_back(boolean("train.adadelta_lr0_identity", params == before));
    }
    {
        AdadeltaState st(1);
        std::vector<double> params = {1.0};
        double x = 1.0, eg2 = 0.0, edx2 = 0.0;
        double worst = 0.0;
        for (int i = 0; i < 10; ++i) {
            adadelta_step(params, {2.0 * params[0]}, st);
            const double g = 2.0 * x;
            eg2 = 0.9 * eg2 + 0.1 * g * g;
            const double dx = -std::sqrt(edx2 + 1e-6) / std::sqrt(eg2 + 1e-6) * g;
            edx2 = 0.9 * edx2 + 0.1 * dx * dx;
            x += dx;
            worst = std::max(worst, std::abs(params[0] - x));
        }
        out.push_back(bounded("train.adadelta_recurrence_oracle", worst, 1e-12,
                              "10 steps on f(x) = x^2"));
    }
    {
        Rng rng(90);
        std::vector<Tensor> support;
        std::vector<int> labels = {0, 0, 1, 1, 2};
        for (int i = 0; i < 5; ++i) {
            Tensor t({6});
            for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
            support.push_back(t);
        }
        std::vector<Tensor> query;
        for (int i = 0; i < 6; ++i) {
            Tensor t({6});
            for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
            query.push_back(t);
        }
        const auto a = argmax_rows(ncc_logits(support, labels, query, 3, 10.0));
        const auto b = argmax_rows(ncc_logits(support, labels, query, 3, 35.0));
        out.push_back(boolean("train.ncc_rescale_argmax_invariance", a == b,
                              "temperature 10 vs 35"));
    }
    {
        auto fx = detail::small_episode_fixture(91);
        fx.run.stop.max_steps = 3;
        FinetuneResult a = finetune_episode(fx.episode, fx.backbone, fx.run, 2);
        FinetuneResult b = finetune_episode(fx.episode, fx.backbone, fx.run, 2);
        bool same = a.query_accuracy == b.query_accuracy && a.steps_taken == b.steps_taken &&
                    a.support_acc_trace == b.support_acc_trace;
        for (std::size_t blk = 0; same && blk < a.adapters.size(); ++blk)
            if (fx.run.insertion.enabled[blk])
                same = flatten_params(a.adapters[blk]) == flatten_params(b.adapters[blk]);
        out.push_back(boolean("train.determinism", same, "bitwise replay"));
    }

    // ---- episodes ----
    {
        Dataset pool = synth_domain_generate(default_target_spec(), 6, 25, 100);
        SamplerConfig cfg;
        cfg.seed = 101;
        bool valid = true;
        for (std::size_t e = 0; e < 10; ++e) {
            Episode ep = sample_episode(pool, cfg, e);
            std::vector<int> counts(ep.way, 0);
            for (const auto& ex : ep.support) {
                valid = valid && ex.label >= 0 && static_cast<std::size_t>(ex.label) < ep.way;
                if (valid) ++counts[ex.label];
            }
            for (int c : counts) valid = valid && c > 0;
            for (std::size_t sid : ep.support_pool_ids)
                for (std::size_t qid : ep.query_pool_ids) valid = valid && sid != qid;
        }
        out.push_back(boolean("episodes.validity",
                              valid, "class coverage, contiguous labels, disjointness"));
    }
    {
        Dataset a = synth_domain_generate(default_source_spec(), 4, 3, 102);
        Dataset b = synth_domain_generate(default_source_spec(), 4, 3, 102);
        bool same = a.size() == b.size();
        for (std::size_t i = 0; same && i < a.size(); ++i)
            same = a[i].label == b[i].label && a[i].image.values == b[i].image.values;
        out.push_back(boolean("episodes.generator_determinism", same, "bitwise replay"));
    }
    {
        ShiftPair pair = make_shift_pair(default_source_spec(), default_target_spec(), 103, 8, 8);
        auto src = band_energy_profile(pair.source);
        auto tgt = band_energy_profile(pair.target);
        const bool separated = tgt[2] >= 2.0 * src[2];
        out.push_back(boolean("episodes.band_energy_separation", separated,
                              "target high-band fraction " + std::to_string(tgt[2]) +
                                  " vs source " + std::to_string(src[2])));
    }

    // ---- harness ----
    {
        Dataset pool = synth_domain_generate(default_target_spec(), 6, 25, 110);
        SamplerConfig cfg;
        cfg.seed = 111;
        bool shared = true;
        for (std::size_t e = 0; e < 5; ++e) {
            Episode x = sample_episode(pool, cfg, e);
            Episode y = sample_episode(pool, cfg, e);  // a second "cell", same seeds
            shared = shared && x.support_pool_ids == y.support_pool_ids &&
                     x.query_pool_ids == y.query_pool_ids;
        }
        out.push_back(boolean("harness.seed_sharing", shared,
                              "episode streams identical across cells"));
    }
    {
        ResultTable t;
        t.rows.push_back(ExperimentRow{"a", "cell", {0.5, 0.625, 0.75}});
        out.push_back(boolean("harness.csv_stability", to_csv(t) == to_csv(t), "byte equality"));
    }
    {
        ExperimentRow row{"ci", "check", {0.5, 0.7}};
        const double want = 1.96 * 0.1 / std::sqrt(2.0);
        out.push_back(bounded("harness.ci_formula", std::abs(row.ci95_halfwidth() - want), 1e-12,
                              "1.96 * sigma / sqrt(n), population sigma"));
    }

    return out;
}

}  // namespace fad
