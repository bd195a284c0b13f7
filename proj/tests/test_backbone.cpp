#include <gtest/gtest.h>

#include "fad/backbone.hpp"
#include "fad/episodes.hpp"
#include "fad/rng.hpp"
#include "fad/train.hpp"
#include "oracles.hpp"

using namespace fad;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
    return t;
}

BackboneConfig small_config() {
    BackboneConfig cfg;
    cfg.num_blocks = 2;
    cfg.channels = {4, 8};
    cfg.input_channels = 1;
    cfg.input_size = 8;
    return cfg;
}

TEST(Backbone, ZeroAdaptersMatchAdapterFreeBitwise) {
    BackboneConfig cfg = small_config();
    BackboneParams params = init_backbone(cfg, 7);
    Tensor x = random_tensor({1, 8, 8}, 2001);

    FadConfig fad;
    std::vector<AdapterParams> adapters;
    for (std::size_t b = 0; b < cfg.num_blocks; ++b)
        adapters.push_back(init_adapter(cfg.block_in_channels(b), cfg.block_out_channels(b), fad,
                                        AdapterVariant::Fad, 0));
    InsertionMask mask = InsertionMask::all(cfg.num_blocks);

    Tensor plain = backbone_forward(x, params);
    Tensor adapted = backbone_forward(x, params, &adapters, &mask, &fad);
    ASSERT_EQ(plain.size(), adapted.size());
    for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_EQ(plain.values[i], adapted.values[i]);
}

TEST(Backbone, DisabledMaskIgnoresAdapters) {
    BackboneConfig cfg = small_config();
    BackboneParams params = init_backbone(cfg, 8);
    Tensor x = random_tensor({1, 8, 8}, 2002);

    FadConfig fad;
    std::vector<AdapterParams> adapters;
    Rng rng(2003);
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
        AdapterParams a = init_adapter(cfg.block_in_channels(b), cfg.block_out_channels(b), fad,
                                       AdapterVariant::Fad, 0);
        for (auto& branch : a.branches)
            for (double& w : branch.weights) w = rng.uniform(-0.5, 0.5);
        adapters.push_back(std::move(a));
    }
    InsertionMask mask = InsertionMask::all(cfg.num_blocks, false);

    Tensor plain = backbone_forward(x, params);
    Tensor masked = backbone_forward(x, params, &adapters, &mask, &fad);
    for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_EQ(plain.values[i], masked.values[i]);
}

TEST(Backbone, MissingAdapterForEnabledBlockThrows) {
    BackboneConfig cfg = small_config();
    BackboneParams params = init_backbone(cfg, 9);
    Tensor x = random_tensor({1, 8, 8}, 2004);
    InsertionMask mask = InsertionMask::all(cfg.num_blocks);
    std::vector<AdapterParams> too_few(1);
    too_few[0] = init_adapter(1, 4, FadConfig{}, AdapterVariant::Fad, 0);
    EXPECT_THROW(backbone_forward(x, params, &too_few, &mask), std::invalid_argument);
    EXPECT_THROW(backbone_forward(x, params, nullptr, &mask), std::invalid_argument);
}

TEST(Backbone, ForwardMatchesStraightLineOracle) {
    BackboneConfig cfg = small_config();
    BackboneParams params = init_backbone(cfg, 10);
    Tensor x = random_tensor({1, 8, 8}, 2005);
    Tensor got = backbone_forward(x, params);

    // independent straight-line recomputation
    Tensor h = x;
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
        Tensor conv = oracle::direct_conv2d_same(h, params.blocks[b]);
        for (double& v : conv.values) v = v > 0.0 ? v : 0.0;
        Tensor pooled({conv.dim(0), conv.dim(1) / 2, conv.dim(2) / 2});
        for (std::size_t c = 0; c < conv.dim(0); ++c)
            for (std::size_t i = 0; i < pooled.dim(1); ++i)
                for (std::size_t j = 0; j < pooled.dim(2); ++j)
                    pooled.at(c, i, j) =
                        (conv.at(c, 2 * i, 2 * j) + conv.at(c, 2 * i, 2 * j + 1) +
                         conv.at(c, 2 * i + 1, 2 * j) + conv.at(c, 2 * i + 1, 2 * j + 1)) /
                        4.0;
        h = pooled;
    }
    double norm = 0.0;
    for (double v : h.values) norm += v * v;
    norm = std::sqrt(norm);
    ASSERT_GT(norm, 0.0);
    ASSERT_EQ(got.size(), h.size());
    for (std::size_t i = 0; i < h.size(); ++i)
        EXPECT_NEAR(got.values[i], h.values[i] / norm, 1e-12);
}

TEST(Backbone, EmbeddingIsUnitNorm) {
    BackboneConfig cfg = small_config();
    BackboneParams params = init_backbone(cfg, 11);
    for (std::uint64_t s = 0; s < 5; ++s) {
        Tensor x = random_tensor({1, 8, 8}, 3000 + s);
        Tensor e = backbone_forward(x, params);
        double norm = 0.0;
        for (double v : e.values) norm += v * v;
        EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-12);
    }
}

TEST(Backbone, InitIsSeedDeterministic) {
    BackboneConfig cfg = small_config();
    BackboneParams a = init_backbone(cfg, 42);
    BackboneParams b = init_backbone(cfg, 42);
    EXPECT_EQ(a.flatten(), b.flatten());
    BackboneParams c = init_backbone(cfg, 43);
    EXPECT_NE(a.flatten(), c.flatten());
}

TEST(Backbone, ConfigValidation) {
    BackboneConfig cfg = small_config();
    cfg.input_size = 6;  // 6 -> 3 -> not divisible
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.channels = {4};
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

Dataset separable_two_class_set(std::uint64_t seed) {
    DomainSpec spec;
    spec.height = spec.width = 8;
    spec.class_ids = {0, 1};
    spec.signatures = {ClassSignature{{Annulus{0.05, 0.35, 1.0}}},
                       ClassSignature{{Annulus{0.6, 1.0, 1.0}}}};
    spec.noise_level = 0.01;
    spec.phase_jitter = 0.4;
    return synth_domain_generate(spec, 2, 12, seed);
}

TEST(Pretrain, ZeroEpochsReturnsSeededInit) {
    BackboneConfig cfg = small_config();
    Dataset data = separable_two_class_set(5001);
    PretrainResult r = pretrain(cfg, data, 0, 0.5, 77);
    BackboneParams init = init_backbone(cfg, 77);
    EXPECT_EQ(r.backbone.flatten(), init.flatten());
    EXPECT_TRUE(r.backbone.frozen);
}

TEST(Pretrain, DeterministicGivenSeed) {
    BackboneConfig cfg = small_config();
    Dataset data = separable_two_class_set(5002);
    PretrainResult a = pretrain(cfg, data, 5, 0.5, 78);
    PretrainResult b = pretrain(cfg, data, 5, 0.5, 78);
    EXPECT_EQ(a.backbone.flatten(), b.backbone.flatten());
    EXPECT_EQ(a.train_accuracy, b.train_accuracy);
}

TEST(Pretrain, LearnsSeparableTwoClassProblem) {
    BackboneConfig cfg = small_config();
    Dataset data = separable_two_class_set(5003);
    PretrainResult r = pretrain(cfg, data, 30, 0.5, 79);
    EXPECT_GE(r.train_accuracy, 0.95);
}

TEST(Pretrain, EmptyDatasetRejected) {
    EXPECT_THROW(pretrain(small_config(), Dataset{}, 1, 0.5, 0), std::invalid_argument);
}

}  // namespace
