#include <gtest/gtest.h>

#include "fad/ncc.hpp"
#include "fad/rng.hpp"
#include "fad/train.hpp"
#include "oracles.hpp"

using namespace fad;

namespace {

Tensor unit(std::vector<double> v) {
    const std::size_t n = v.size();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return Tensor::from_values({n}, std::move(v));
}

TEST(NccLogits, CosineExtremes) {
    std::vector<Tensor> support = {unit({1.0, 0.0}), unit({0.0, 1.0})};
    std::vector<int> labels = {0, 1};
    std::vector<Tensor> query = {unit({1.0, 0.0})};
    Tensor logits = ncc_logits(support, labels, query, 2);
    EXPECT_NEAR(logits.at(0, std::size_t{0}), 10.0, 1e-12);
    EXPECT_NEAR(logits.at(0, std::size_t{1}), 0.0, 1e-12);
}

TEST(NccLogits, PermutationEquivariance) {
    Rng rng(3100);
    std::vector<Tensor> support;
    std::vector<int> labels;
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 2; ++k) {
            Tensor t({6});
            for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
            support.push_back(t);
            labels.push_back(c);
        }
    std::vector<Tensor> query;
    for (int q = 0; q < 4; ++q) {
        Tensor t({6});
        for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
        query.push_back(t);
    }
    Tensor base = ncc_logits(support, labels, query, 3);

    // permute class ids 0,1,2 -> 2,0,1
    const int perm[3] = {2, 0, 1};
    std::vector<int> permuted;
    for (int y : labels) permuted.push_back(perm[y]);
    Tensor shuffled = ncc_logits(support, permuted, query, 3);
    for (std::size_t q = 0; q < query.size(); ++q)
        for (int c = 0; c < 3; ++c)
            EXPECT_NEAR(base.at(q, static_cast<std::size_t>(c)),
                        shuffled.at(q, static_cast<std::size_t>(perm[c])), 1e-12);
}

TEST(NccLogits, ScaleInvariance) {
    Rng rng(3101);
    std::vector<Tensor> support;
    std::vector<int> labels = {0, 0, 1, 1};
    for (int i = 0; i < 4; ++i) {
        Tensor t({5});
        for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
        support.push_back(t);
    }
    std::vector<Tensor> query(1, Tensor({5}));
    for (double& v : query[0].values) v = rng.uniform(-1.0, 1.0);

    Tensor base = ncc_logits(support, labels, query, 2);
    for (auto& t : support)
        for (double& v : t.values) v *= 3.0;
    for (double& v : query[0].values) v *= 3.0;
    Tensor scaled = ncc_logits(support, labels, query, 2);
    for (std::size_t i = 0; i < base.size(); ++i)
        EXPECT_NEAR(base.values[i], scaled.values[i], 1e-12);
}

TEST(NccLogits, EmptyClassRejected) {
    std::vector<Tensor> support = {unit({1.0, 0.0})};
    std::vector<int> labels = {0};
    std::vector<Tensor> query = {unit({1.0, 0.0})};
    EXPECT_THROW(ncc_logits(support, labels, query, 2), std::invalid_argument);
}

TEST(CrossEntropy, UniformLogitsGiveLogN) {
    for (std::size_t n : {2, 3, 7}) {
        Tensor logits({1, n}, 0.5);
        EXPECT_NEAR(cross_entropy(logits, {0}), std::log(static_cast<double>(n)), 1e-12);
    }
}

TEST(CrossEntropy, LargeMarginDrivesLossToZero) {
    Tensor logits({1, 2}, 0.0);
    logits.at(0, std::size_t{0}) = 100.0;
    EXPECT_LE(cross_entropy(logits, {0}), 1e-40);
}

TEST(CrossEntropy, MatchesDirectFormulaOracle) {
    Rng rng(3102);
    Tensor logits({5, 3});
    for (double& v : logits.values) v = rng.uniform(-2.0, 2.0);
    std::vector<int> labels = {0, 1, 2, 1, 0};
    double want = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        double denom = 0.0;
        for (std::size_t j = 0; j < 3; ++j) denom += std::exp(logits.at(i, j));
        want -= std::log(std::exp(logits.at(i, static_cast<std::size_t>(labels[i]))) / denom);
    }
    want /= 5.0;
    EXPECT_NEAR(cross_entropy(logits, labels), want, 1e-12);
}

// ---- episode fine-tuning ----

struct EpisodeFixture {
    BackboneParams backbone;
    Episode episode;
    EpisodeRunConfig run;
};

EpisodeFixture make_fixture(std::size_t shots_per_class, AdapterVariant variant,
                            std::uint64_t seed) {
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
    scfg.mode = shots_per_class == 5 ? SamplerMode::VaryingFiveShot : SamplerMode::VaryingVarying;
    scfg.way_min = scfg.way_max = 3;
    scfg.max_support = shots_per_class;
    scfg.query_per_class = 5;
    scfg.seed = seed;

    EpisodeFixture fx;
    fx.backbone = pretrain(cfg, pool, 0, 0.5, seed).backbone;  // seeded random, frozen
    fx.episode = sample_episode(pool, scfg, 0);
    fx.run.variant = variant;
    fx.run.insertion = InsertionMask::all(cfg.num_blocks);
    return fx;
}

// single-shot support: every support point is its own centroid, so support
// accuracy is 1.0 before any optimization
EpisodeFixture perfect_at_step0_fixture() {
    EpisodeFixture fx = make_fixture(1, AdapterVariant::Fad, 4001);
    return fx;
}

TEST(Finetune, PerfectSupportAtStepZeroShortCircuits) {
    EpisodeFixture fx = perfect_at_step0_fixture();
    FinetuneResult r = finetune_episode(fx.episode, fx.backbone, fx.run, 1);
    EXPECT_EQ(r.steps_taken, 0u);
    ASSERT_EQ(r.support_acc_trace.size(), 1u);
    EXPECT_GE(r.support_acc_trace[0], fx.run.stop.support_acc_threshold);
    // adapters stayed zero
    for (std::size_t b = 0; b < r.adapters.size(); ++b)
        if (fx.run.insertion.enabled[b])
            for (double v : flatten_params(r.adapters[b])) EXPECT_EQ(v, 0.0);
    // query accuracy equals the frozen-backbone result
    EXPECT_EQ(r.query_accuracy, evaluate_episode(fx.episode, fx.backbone));
}

TEST(Finetune, MaxStepsOnePerformsExactlyOneStep) {
    EpisodeFixture fx = make_fixture(6, AdapterVariant::Fad, 4002);
    fx.run.stop.max_steps = 1;
    FinetuneResult r = finetune_episode(fx.episode, fx.backbone, fx.run, 1);
    ASSERT_GT(r.support_acc_trace.size(), 0u);
    // precondition for the test to be meaningful
    ASSERT_LT(r.support_acc_trace[0], fx.run.stop.support_acc_threshold);
    EXPECT_EQ(r.steps_taken, 1u);
    bool any_nonzero = false;
    for (std::size_t b = 0; b < r.adapters.size(); ++b)
        if (fx.run.insertion.enabled[b])
            for (double v : flatten_params(r.adapters[b])) any_nonzero |= v != 0.0;
    EXPECT_TRUE(any_nonzero);
}

TEST(Finetune, BackboneBitwiseImmutable) {
    EpisodeFixture fx = make_fixture(6, AdapterVariant::Fad, 4003);
    fx.run.stop.max_steps = 3;
    const std::vector<double> before = fx.backbone.flatten();
    FinetuneResult r = finetune_episode(fx.episode, fx.backbone, fx.run, 1);
    (void)r;
    EXPECT_EQ(fx.backbone.flatten(), before);
}

TEST(Finetune, DeterministicAcrossRuns) {
    EpisodeFixture fx = make_fixture(6, AdapterVariant::Fad, 4004);
    fx.run.stop.max_steps = 4;
    FinetuneResult a = finetune_episode(fx.episode, fx.backbone, fx.run, 5);
    FinetuneResult b = finetune_episode(fx.episode, fx.backbone, fx.run, 5);
    EXPECT_EQ(a.query_accuracy, b.query_accuracy);
    EXPECT_EQ(a.steps_taken, b.steps_taken);
    EXPECT_EQ(a.support_acc_trace, b.support_acc_trace);
    for (std::size_t blk = 0; blk < a.adapters.size(); ++blk)
        if (fx.run.insertion.enabled[blk])
            EXPECT_EQ(flatten_params(a.adapters[blk]), flatten_params(b.adapters[blk]));
}

TEST(Finetune, UnfrozenBackboneRejected) {
    EpisodeFixture fx = make_fixture(6, AdapterVariant::Fad, 4005);
    fx.backbone.frozen = false;
    EXPECT_THROW(finetune_episode(fx.episode, fx.backbone, fx.run, 1), std::invalid_argument);
}

TEST(Finetune, MissingSupportClassRejected) {
    EpisodeFixture fx = make_fixture(6, AdapterVariant::Fad, 4006);
    // drop all support examples of class 0
    Episode broken = fx.episode;
    broken.support.erase(
        std::remove_if(broken.support.begin(), broken.support.end(),
                       [](const LabeledImage& ex) { return ex.label == 0; }),
        broken.support.end());
    EXPECT_THROW(finetune_episode(broken, fx.backbone, fx.run, 1), std::invalid_argument);
}

TEST(Finetune, AllVariantsRunAndAdapt) {
    for (auto variant :
         {AdapterVariant::Fad, AdapterVariant::Linear1x1, AdapterVariant::BandwiseSpatial}) {
        EpisodeFixture fx = make_fixture(6, variant, 4007);
        fx.run.stop.max_steps = 3;
        FinetuneResult r = finetune_episode(fx.episode, fx.backbone, fx.run, 2);
        EXPECT_GE(r.query_accuracy, 0.0);
        EXPECT_LE(r.query_accuracy, 1.0);
        EXPECT_GE(r.support_acc_trace.size(), 1u);
    }
}

TEST(Finetune, AdadeltaZeroLrKeepsAdaptersZero) {
    EpisodeFixture fx = make_fixture(6, AdapterVariant::Fad, 4008);
    fx.run.lr = 0.0;
    fx.run.stop.max_steps = 2;
    FinetuneResult r = finetune_episode(fx.episode, fx.backbone, fx.run, 1);
    for (std::size_t b = 0; b < r.adapters.size(); ++b)
        if (fx.run.insertion.enabled[b])
            for (double v : flatten_params(r.adapters[b])) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(r.query_accuracy, evaluate_episode(fx.episode, fx.backbone));
}

TEST(SupportLoss, GradientsMatchFiniteDifferences) {
    EpisodeFixture fx = make_fixture(3, AdapterVariant::Fad, 4009);
    const BackboneConfig& cfg = fx.backbone.config;

    std::vector<AdapterParams> adapters(cfg.num_blocks);
    Rng prng(4010);
    std::vector<double> flat;
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
        adapters[b] = init_adapter(cfg.block_in_channels(b), cfg.block_out_channels(b), fx.run.fad,
                                   fx.run.variant, 0);
        for (auto& branch : adapters[b].branches)
            for (double& w : branch.weights) w = 0.1 * prng.next_gaussian();
        const auto part = flatten_params(adapters[b]);
        flat.insert(flat.end(), part.begin(), part.end());
    }

    auto set_flat = [&](const std::vector<double>& values) {
        std::size_t off = 0;
        for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
            const std::size_t n = param_count(adapters[b]);
            std::vector<double> part(values.begin() + off, values.begin() + off + n);
            unflatten_params(part, adapters[b]);
            off += n;
        }
    };

    std::vector<double> analytic;
    support_loss(fx.episode, fx.backbone, adapters, fx.run, &analytic);
    ASSERT_EQ(analytic.size(), flat.size());

    Rng coord_rng(4011);
    for (int c = 0; c < 25; ++c) {
        const std::size_t i = coord_rng.next_below(flat.size());
        std::vector<double> probe = flat;
        probe[i] = flat[i] + 1e-5;
        set_flat(probe);
        const double hi = support_loss(fx.episode, fx.backbone, adapters, fx.run);
        probe[i] = flat[i] - 1e-5;
        set_flat(probe);
        const double lo = support_loss(fx.episode, fx.backbone, adapters, fx.run);
        set_flat(flat);
        const double fd = (hi - lo) / 2e-5;
        const double rel =
            std::abs(analytic[i] - fd) / std::max({std::abs(analytic[i]), std::abs(fd), 1e-6});
        EXPECT_LE(rel, 1e-4) << "coordinate " << i;
    }
}

}  // namespace
