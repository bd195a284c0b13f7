#include <gtest/gtest.h>

#include <cmath>

#include "fad/rng.hpp"
#include "fad/spectral.hpp"
#include "oracles.hpp"

using namespace fad;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
    return t;
}

double max_cplx_diff(const CTensor& a, const CTensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

TEST(Dft2, ConstantInputIsDcOnly) {
    const double c = 0.37;
    Tensor h({1, 4, 4}, c);
    CTensor f = dft2(h);
    for (std::size_t u = 0; u < 4; ++u)
        for (std::size_t v = 0; v < 4; ++v) {
            const std::complex<double> z = f.at(0, u, v);
            if (u == 2 && v == 2)
                EXPECT_NEAR(std::abs(z - std::complex<double>{c * 16.0, 0.0}), 0.0, 1e-12);
            else
                EXPECT_NEAR(std::abs(z), 0.0, 1e-12);
        }
}

TEST(Dft2, ImpulseHasFlatMagnitude) {
    Tensor h({1, 4, 4}, 0.0);
    h.at(0, 0, 0) = 1.0;
    CTensor f = dft2(h);
    for (const auto& z : f.values) EXPECT_NEAR(std::abs(z), 1.0, 1e-12);
}

TEST(Dft2, MatchesNaiveDoubleSum) {
    Tensor h = random_tensor({2, 5, 6}, 101);
    CTensor got = dft2(h);
    CTensor want = oracle::naive_dft2_centered(h);
    EXPECT_LE(max_cplx_diff(got, want), 1e-10);
}

TEST(Dft2, ConjugateSymmetryOfRealInput) {
    for (auto [hh, ww] : {std::pair<std::size_t, std::size_t>{6, 8},
                          std::pair<std::size_t, std::size_t>{5, 7},
                          std::pair<std::size_t, std::size_t>{5, 8}}) {
        Tensor h = random_tensor({1, hh, ww}, 707 + hh * 10 + ww);
        CTensor f = dft2(h);
        const std::size_t u0 = hh / 2, v0 = ww / 2;
        for (std::size_t u = 0; u < hh; ++u)
            for (std::size_t v = 0; v < ww; ++v) {
                // conjugate mirror in centered coordinates
                const std::size_t a = (u + hh - u0) % hh;
                const std::size_t b = (v + ww - v0) % ww;
                const std::size_t am = (hh - a) % hh;
                const std::size_t bm = (ww - b) % ww;
                const std::size_t um = (am + u0) % hh;
                const std::size_t vm = (bm + v0) % ww;
                EXPECT_NEAR(std::abs(f.at(0, u, v) - std::conj(f.at(0, um, vm))), 0.0, 1e-9);
            }
    }
}

TEST(Idft2, RoundTrip) {
    Tensor h = random_tensor({2, 6, 6}, 111);
    Idft2Result r = idft2(dft2(h));
    EXPECT_LE(max_abs_diff(r.real, h), 1e-10 * std::max(1.0, max_abs(h)));
    EXPECT_LE(r.imag_residual, 1e-10);
}

TEST(Idft2, ZeroSpectrum) {
    CTensor f({1, 4, 4});
    Idft2Result r = idft2(f);
    EXPECT_EQ(max_abs(r.real), 0.0);
    EXPECT_EQ(r.imag_residual, 0.0);
}

TEST(Idft2, MatchesNaiveOnConjugateSymmetricSpectrum) {
    // make a conjugate-symmetric spectrum out of a real signal
    Tensor h = random_tensor({1, 5, 6}, 121);
    CTensor f = oracle::naive_dft2_centered(h);
    Idft2Result got = idft2(f);
    double res = 0.0;
    Tensor want = oracle::naive_idft2_centered(f, &res);
    EXPECT_LE(max_abs_diff(got.real, want), 1e-10);
    EXPECT_LE(got.imag_residual, 1e-9);
}

TEST(Idft2, ParsevalHolds) {
    Tensor h = random_tensor({3, 7, 9}, 131);
    CTensor f = dft2(h);
    const double se = spatial_energy(h);
    const double fe = spectral_energy(f);
    EXPECT_LE(std::abs(se - fe) / se, 1e-10);
}

TEST(RadialMask, DcBelongsToLowBand) {
    BandMask low = radial_mask(8, 8, 0.0, 0.3, BandKind::Low);
    EXPECT_EQ(low.at(4, 4), 1);  // d = 0
}

TEST(RadialMask, CornerIsHighBand) {
    BandMask high = radial_mask(8, 8, 0.5, std::sqrt(2.0), BandKind::High);
    // (0,0) sits at normalized distance sqrt(2)
    EXPECT_EQ(high.at(0, 0), 1);
    BandMask mid = radial_mask(8, 8, 0.3, 0.5, BandKind::Mid);
    EXPECT_EQ(mid.at(0, 0), 0);
}

TEST(RadialMask, MatchesPointwiseOracle) {
    const std::size_t n = 9;
    BandMask mid = radial_mask(n, n, 0.3, 0.5, BandKind::Mid);
    const double u0 = n / 2, v0 = n / 2;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v) {
            const double du = (static_cast<double>(u) - u0) / u0;
            const double dv = (static_cast<double>(v) - v0) / v0;
            const double d = std::sqrt(du * du + dv * dv);
            EXPECT_EQ(mid.at(u, v), (0.3 < d && d <= 0.5) ? 1 : 0);
        }
}

TEST(RadialMask, DegenerateGridRejected) {
    EXPECT_THROW(radial_mask(1, 8, 0.0, 0.3, BandKind::Low), std::invalid_argument);
    EXPECT_THROW(radial_mask(8, 1, 0.0, 0.3, BandKind::Low), std::invalid_argument);
}

TEST(BandMasks, DisjointAndPartition) {
    for (auto [hh, ww] :
         {std::pair<std::size_t, std::size_t>{8, 8}, std::pair<std::size_t, std::size_t>{9, 9},
          std::pair<std::size_t, std::size_t>{8, 13}, std::pair<std::size_t, std::size_t>{5, 16}}) {
        BandMaskSet s = band_masks(hh, ww, BandThresholds{});
        for (std::size_t i = 0; i < hh * ww; ++i) {
            const int sum = s.low.values[i] + s.mid.values[i] + s.high.values[i];
            EXPECT_EQ(sum, 1);
            EXPECT_EQ(s.low.values[i] * s.mid.values[i], 0);
            EXPECT_EQ(s.low.values[i] * s.high.values[i], 0);
            EXPECT_EQ(s.mid.values[i] * s.high.values[i], 0);
        }
    }
}

TEST(BandMasks, LowPopcountMatchesOracle) {
    BandMaskSet s = band_masks(8, 8, BandThresholds{0.3, 0.5});
    std::size_t count = 0;
    const double u0 = 4, v0 = 4;
    for (std::size_t u = 0; u < 8; ++u)
        for (std::size_t v = 0; v < 8; ++v) {
            const double du = (static_cast<double>(u) - u0) / u0;
            const double dv = (static_cast<double>(v) - v0) / v0;
            if (std::sqrt(du * du + dv * dv) <= 0.3) ++count;
        }
    EXPECT_EQ(s.low.popcount(), count);
}

TEST(BandMasks, ConjugateMirrorSymmetry) {
    for (auto [hh, ww] :
         {std::pair<std::size_t, std::size_t>{8, 8}, std::pair<std::size_t, std::size_t>{9, 7},
          std::pair<std::size_t, std::size_t>{6, 9}}) {
        BandMaskSet s = band_masks(hh, ww, BandThresholds{});
        const std::size_t u0 = hh / 2, v0 = ww / 2;
        for (const BandMask* m : {&s.low, &s.mid, &s.high})
            for (std::size_t u = 0; u < hh; ++u)
                for (std::size_t v = 0; v < ww; ++v) {
                    const std::size_t a = (u + hh - u0) % hh;
                    const std::size_t b = (v + ww - v0) % ww;
                    const std::size_t um = (((hh - a) % hh) + u0) % hh;
                    const std::size_t vm = (((ww - b) % ww) + v0) % ww;
                    EXPECT_EQ(m->at(u, v), m->at(um, vm));
                }
    }
}

TEST(ApplyMask, AllOnesIsBitwiseIdentity) {
    Tensor h = random_tensor({2, 6, 6}, 141);
    CTensor f = dft2(h);
    BandMask ones;
    ones.height = 6;
    ones.width = 6;
    ones.values.assign(36, 1);
    CTensor g = apply_mask(f, ones);
    for (std::size_t i = 0; i < f.values.size(); ++i) EXPECT_EQ(f.values[i], g.values[i]);
}

TEST(ApplyMask, AllZerosGivesZeroSpectrum) {
    Tensor h = random_tensor({2, 6, 6}, 151);
    CTensor f = dft2(h);
    BandMask zeros;
    zeros.height = 6;
    zeros.width = 6;
    zeros.values.assign(36, 0);
    CTensor g = apply_mask(f, zeros);
    for (const auto& z : g.values) EXPECT_EQ(z, (std::complex<double>{0.0, 0.0}));
}

TEST(ApplyMask, MatchesElementwiseOracle) {
    Tensor h = random_tensor({2, 8, 8}, 161);
    CTensor f = dft2(h);
    BandMask low = radial_mask(8, 8, 0.0, 0.3, BandKind::Low);
    CTensor got = apply_mask(f, low);
    for (std::size_t ch = 0; ch < 2; ++ch)
        for (std::size_t u = 0; u < 8; ++u)
            for (std::size_t v = 0; v < 8; ++v) {
                const std::complex<double> want =
                    f.at(ch, u, v) * static_cast<double>(low.at(u, v));
                EXPECT_EQ(got.at(ch, u, v), want);
            }
}

TEST(BandDecompose, BandsSumToInput) {
    Tensor h = random_tensor({2, 8, 8}, 171);
    BandDecomposition d = band_decompose(h, BandThresholds{});
    Tensor sum = add(add(d.low, d.mid), d.high);
    EXPECT_LE(max_abs_diff(sum, h), 1e-9);
    EXPECT_LE(d.max_imag_residual, 1e-9);
}

TEST(BandDecompose, ConstantInputIsPureLow) {
    Tensor h({1, 8, 8}, 3.25);
    BandDecomposition d = band_decompose(h, BandThresholds{});
    EXPECT_LE(max_abs_diff(d.low, h), 1e-10);
    EXPECT_LE(max_abs(d.mid), 1e-10);
    EXPECT_LE(max_abs(d.high), 1e-10);
}

TEST(BandDecompose, MatchesNaivePipeline) {
    Tensor h = random_tensor({1, 8, 8}, 181);
    const BandThresholds t{};
    BandDecomposition got = band_decompose(h, t);
    BandMaskSet masks = band_masks(8, 8, t);
    CTensor f = oracle::naive_dft2_centered(h);
    const BandMask* ms[3] = {&masks.low, &masks.mid, &masks.high};
    const Tensor* gs[3] = {&got.low, &got.mid, &got.high};
    for (int b = 0; b < 3; ++b) {
        CTensor masked = f;
        for (std::size_t u = 0; u < 8; ++u)
            for (std::size_t v = 0; v < 8; ++v)
                if (!ms[b]->at(u, v)) masked.at(0, u, v) = {0.0, 0.0};
        Tensor want = oracle::naive_idft2_centered(masked);
        EXPECT_LE(max_abs_diff(*gs[b], want), 1e-9);
    }
}

TEST(TransferFunction, OneByOneKernelIsFlat) {
    Tensor k = Tensor::from_values({1, 1}, {0.73});
    CTensor tf = kernel_transfer_function(k, 16, 16);
    double mag_min = 1e300, mag_max = -1e300;
    for (const auto& z : tf.values) {
        mag_min = std::min(mag_min, std::abs(z));
        mag_max = std::max(mag_max, std::abs(z));
        EXPECT_NEAR(z.real(), 0.73, 1e-12);
        EXPECT_NEAR(z.imag(), 0.0, 1e-12);
    }
    EXPECT_LE(mag_max - mag_min, 1e-12);
}

TEST(TransferFunction, CenteredDeltaIsUnitResponse) {
    Tensor k({3, 3}, 0.0);
    k.at(1, 1) = 1.0;
    CTensor tf = kernel_transfer_function(k, 8, 8);
    for (const auto& z : tf.values) {
        EXPECT_NEAR(std::abs(z), 1.0, 1e-12);
        EXPECT_NEAR(std::arg(z), 0.0, 1e-12);
    }
}

TEST(TransferFunction, SeededThreeByThreeHasSpreadAndMatchesOracle) {
    Tensor k({3, 3});
    Rng rng(191);
    for (double& v : k.values) v = rng.uniform(-1.0, 1.0);
    CTensor tf = kernel_transfer_function(k, 16, 16);

    // naive oracle: pad + circular center + naive dft
    Tensor padded({1, 16, 16}, 0.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            padded.at(0, (i + 16 - 1) % 16, (j + 16 - 1) % 16) = k.at(i, j);
    CTensor want = oracle::naive_dft2_centered(padded);
    EXPECT_LE(max_cplx_diff(tf, want), 1e-10);

    double mag_min = 1e300, mag_max = -1e300;
    for (const auto& z : tf.values) {
        mag_min = std::min(mag_min, std::abs(z));
        mag_max = std::max(mag_max, std::abs(z));
    }
    EXPECT_GT(mag_max - mag_min, 1e-3);
}

TEST(TransferFunction, EvenKernelRejected) {
    Tensor k({2, 2}, 1.0);
    EXPECT_THROW(kernel_transfer_function(k, 8, 8), std::invalid_argument);
}

TEST(Thresholds, Validation) {
    EXPECT_NO_THROW((BandThresholds{0.3, 0.5}.validate()));
    EXPECT_THROW((BandThresholds{0.5, 0.3}.validate()), std::invalid_argument);
    EXPECT_THROW((BandThresholds{0.0, 0.5}.validate()), std::invalid_argument);
    EXPECT_THROW((BandThresholds{0.3, 1.5}.validate()), std::invalid_argument);
}

}  // namespace
