#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fad/tensor.hpp"

// Frequency diversion primitives: per-channel 2D DFT/IDFT with a centered
// spectrum, radial band masks, band extraction and reconstruction, and the
// transfer-function view of convolution kernels.
//
// Conventions, fixed once for the whole project:
//   * forward transform is the unnormalized double sum
//       F(u, v) = sum_{m, n} h(m, n) exp(-2*pi*i*(u*m/H + v*n/W))
//     with H-major indexing (u runs over rows), then shifted so the DC
//     coefficient sits at (H/2, W/2) (floor division);
//   * inverse transform unshifts, applies the conjugate sum with a 1/(W*H)
//     factor, and returns the real part together with the largest discarded
//     imaginary magnitude;
//   * masks live on the centered grid and select coefficients by normalized
//     radial distance d(u, v) = sqrt(((u-u0)/u0)^2 + ((v-v0)/v0)^2).

namespace fad {

enum class BandKind { Low, Mid, High };

inline const char* band_name(BandKind k) {
    switch (k) {
        case BandKind::Low: return "low";
        case BandKind::Mid: return "mid";
        default: return "high";
    }
}

// Binary radial mask over an H x W centered spectrum, selecting d in
// (r1, r2].  Low-band masks include d = 0 so the DC coefficient is always
// owned by the low branch; high-band masks are unbounded above.
struct BandMask {
    std::size_t height = 0;
    std::size_t width = 0;
    double r1 = 0.0;
    double r2 = 0.0;
    BandKind band_kind = BandKind::Low;
    std::vector<std::uint8_t> values;  // H x W, row-major, entries in {0, 1}

    std::uint8_t at(std::size_t u, std::size_t v) const { return values[u * width + v]; }
    std::size_t popcount() const {
        std::size_t n = 0;
        for (auto b : values) n += b;
        return n;
    }
};

// Band boundaries. The defaults split off a compact low band and leave the
// wide outer region to the high branch.
struct BandThresholds {
    double r1 = 0.3;
    double r2 = 0.5;

    void validate() const {
        const double rmax = std::sqrt(2.0);
        if (!(0.0 < r1 && r1 < r2 && r2 <= rmax))
            throw std::invalid_argument("band thresholds must satisfy 0 < r1 < r2 <= sqrt(2), got r1=" +
                                        std::to_string(r1) + " r2=" + std::to_string(r2));
    }
};

namespace detail {

// Twiddle factors exp(-2*pi*i*j/n), j = 0..n-1. Cached per size and thread.
inline const std::vector<std::complex<double>>& dft_roots(std::size_t n) {
    thread_local std::vector<std::vector<std::complex<double>>> cache;
    if (cache.size() <= n) cache.resize(n + 1);
    auto& roots = cache[n];
    if (roots.empty()) {
        roots.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = -2.0 * 3.14159265358979323846 * static_cast<double>(j) /
                               static_cast<double>(n);
            roots[j] = {std::cos(ang), std::sin(ang)};
        }
    }
    return roots;
}

// One unnormalized 1D transform of every row (length w) in a plane of h rows.
// sign = +1 applies exp(-2*pi*i*...) (forward), -1 the conjugate.
inline void dft_rows(std::vector<std::complex<double>>& data, std::size_t h, std::size_t w,
                     int sign) {
    const auto& roots = dft_roots(w);
    std::vector<std::complex<double>> row(w);
    for (std::size_t i = 0; i < h; ++i) {
        std::complex<double>* r = &data[i * w];
        for (std::size_t v = 0; v < w; ++v) {
            std::complex<double> acc{0.0, 0.0};
            std::size_t idx = 0;
            for (std::size_t n = 0; n < w; ++n) {
                std::complex<double> tw = roots[idx];
                if (sign < 0) tw = std::conj(tw);
                acc += r[n] * tw;
                idx += v;
                if (idx >= w) idx -= w;
            }
            row[v] = acc;
        }
        for (std::size_t v = 0; v < w; ++v) r[v] = row[v];
    }
}

inline void dft_cols(std::vector<std::complex<double>>& data, std::size_t h, std::size_t w,
                     int sign) {
    const auto& roots = dft_roots(h);
    std::vector<std::complex<double>> col(h);
    for (std::size_t j = 0; j < w; ++j) {
        for (std::size_t u = 0; u < h; ++u) {
            std::complex<double> acc{0.0, 0.0};
            std::size_t idx = 0;
            for (std::size_t m = 0; m < h; ++m) {
                std::complex<double> tw = roots[idx];
                if (sign < 0) tw = std::conj(tw);
                acc += data[m * w + j] * tw;
                idx += u;
                if (idx >= h) idx -= h;
            }
            col[u] = acc;
        }
        for (std::size_t u = 0; u < h; ++u) data[u * w + j] = col[u];
    }
}

// Moves the DC coefficient from (0, 0) to (h/2, w/2): out[u][v] =
// in[(u - u0) mod h][(v - v0) mod w].
inline void shift_plane(const std::complex<double>* in, std::complex<double>* out,
                        std::size_t h, std::size_t w, bool inverse) {
    const std::size_t u0 = h / 2, v0 = w / 2;
    for (std::size_t u = 0; u < h; ++u) {
        const std::size_t su = inverse ? (u + u0) % h : (u + h - u0) % h;
        for (std::size_t v = 0; v < w; ++v) {
            const std::size_t sv = inverse ? (v + v0) % w : (v + w - v0) % w;
            out[u * w + v] = in[su * w + sv];
        }
    }
}

struct IdftPlane {
    std::vector<double> real;
    double imag_residual = 0.0;
};

// Inverse transform of one centered plane. scale_sign exists solely so the
// verification suite can inject a broken normalization and watch the
// round-trip property fail; production callers always pass +1.
inline IdftPlane idft_plane(const std::complex<double>* centered, std::size_t h, std::size_t w,
                            double scale_sign) {
    std::vector<std::complex<double>> work(h * w);
    shift_plane(centered, work.data(), h, w, /*inverse=*/true);
    dft_rows(work, h, w, -1);
    dft_cols(work, h, w, -1);
    IdftPlane out;
    out.real.resize(h * w);
    const double norm = scale_sign / (static_cast<double>(w) * static_cast<double>(h));
    for (std::size_t i = 0; i < h * w; ++i) {
        const std::complex<double> z = work[i] * norm;
        out.real[i] = z.real();
        out.imag_residual = std::max(out.imag_residual, std::abs(z.imag()));
    }
    return out;
}

}  // namespace detail

// Per-channel forward transform of a C x H x W map; the result is centered.
inline CTensor dft2(const Tensor& h) {
    if (h.rank() != 3)
        throw ShapeError("dft2 expects C x H x W input, got " + detail::shape_str(h.shape));
    const std::size_t c = h.dim(0), hh = h.dim(1), ww = h.dim(2);
    if (hh < 1 || ww < 1) throw ShapeError("dft2: degenerate spatial size");
    CTensor out({c, hh, ww});
    std::vector<std::complex<double>> work(hh * ww);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = &h.values[ch * hh * ww];
        for (std::size_t i = 0; i < hh * ww; ++i) work[i] = {src[i], 0.0};
        detail::dft_rows(work, hh, ww, +1);
        detail::dft_cols(work, hh, ww, +1);
        detail::shift_plane(work.data(), &out.values[ch * hh * ww], hh, ww, /*inverse=*/false);
    }
    return out;
}

struct Idft2Result {
    Tensor real;
    double imag_residual = 0.0;  // L-inf norm of the discarded imaginary part
};

// Per-channel inverse of a centered C x H x W spectrum.
inline Idft2Result idft2(const CTensor& f) {
    if (f.rank() != 3)
        throw ShapeError("idft2 expects C x H x W input, got " + detail::shape_str(f.shape));
    const std::size_t c = f.dim(0), hh = f.dim(1), ww = f.dim(2);
    Idft2Result out;
    out.real = Tensor({c, hh, ww});
    for (std::size_t ch = 0; ch < c; ++ch) {
        auto plane = detail::idft_plane(&f.values[ch * hh * ww], hh, ww, +1.0);
        std::copy(plane.real.begin(), plane.real.end(), out.real.values.begin() + ch * hh * ww);
        out.imag_residual = std::max(out.imag_residual, plane.imag_residual);
    }
    return out;
}

// Builds one radial band mask.  Band rules:
//   Low  : 0 <= d <= r2   (r1 is forced to 0, DC included)
//   Mid  : r1 < d <= r2
//   High : r1 < d         (r2 is reported as sqrt(2), the largest distance)
inline BandMask radial_mask(std::size_t height, std::size_t width, double r1, double r2,
                            BandKind kind) {
    if (height < 2 || width < 2)
        throw std::invalid_argument("radial_mask: H and W must be >= 2, got " +
                                    std::to_string(height) + "x" + std::to_string(width));
    if (r1 < 0.0) throw std::invalid_argument("radial_mask: r1 must be >= 0");
    if (kind != BandKind::High && !(r2 > r1))
        throw std::invalid_argument("radial_mask: requires r1 < r2");

    BandMask m;
    m.height = height;
    m.width = width;
    m.r1 = kind == BandKind::Low ? 0.0 : r1;
    m.r2 = kind == BandKind::High ? std::sqrt(2.0) : r2;
    m.band_kind = kind;
    m.values.assign(height * width, 0);

    const double u0 = static_cast<double>(height / 2);
    const double v0 = static_cast<double>(width / 2);
    for (std::size_t u = 0; u < height; ++u) {
        const double du = (static_cast<double>(u) - u0) / u0;
        for (std::size_t v = 0; v < width; ++v) {
            const double dv = (static_cast<double>(v) - v0) / v0;
            const double d = std::sqrt(du * du + dv * dv);
            bool inside = false;
            switch (kind) {
                case BandKind::Low: inside = d <= r2; break;
                case BandKind::Mid: inside = r1 < d && d <= r2; break;
                case BandKind::High: inside = r1 < d; break;
            }
            if (inside) m.values[u * width + v] = 1;
        }
    }
    return m;
}

struct BandMaskSet {
    BandMask low, mid, high;
};

// The three disjoint masks partitioning the centered grid: low (0, r1] with
// DC, mid (r1, r2], high (r2, sqrt(2)].
inline BandMaskSet band_masks(std::size_t height, std::size_t width, BandThresholds t) {
    t.validate();
    BandMaskSet s;
    s.low = radial_mask(height, width, 0.0, t.r1, BandKind::Low);
    s.mid = radial_mask(height, width, t.r1, t.r2, BandKind::Mid);
    s.high = radial_mask(height, width, t.r2, std::sqrt(2.0), BandKind::High);
    return s;
}

// Elementwise mask application, broadcast over channels.
inline CTensor apply_mask(const CTensor& f, const BandMask& m) {
    if (f.rank() != 3 || f.dim(1) != m.height || f.dim(2) != m.width)
        throw ShapeError("apply_mask: spectrum " + detail::shape_str(f.shape) +
                         " does not match mask [" + std::to_string(m.height) + "x" +
                         std::to_string(m.width) + "]");
    CTensor out = f;
    const std::size_t hw = m.height * m.width;
    for (std::size_t ch = 0; ch < f.dim(0); ++ch) {
        std::complex<double>* plane = &out.values[ch * hw];
        for (std::size_t i = 0; i < hw; ++i)
            if (!m.values[i]) plane[i] = {0.0, 0.0};
    }
    return out;
}

struct BandDecomposition {
    Tensor low, mid, high;
    double max_imag_residual = 0.0;
};

// Splits a feature map into its three band reconstructions,
// IDFT(mask * DFT(h)).  A residual above 1e-9 means the mask broke conjugate
// symmetry, which is a bug, so it is rejected rather than returned.
inline BandDecomposition band_decompose(const Tensor& h, BandThresholds t) {
    const BandMaskSet masks = band_masks(h.dim(1), h.dim(2), t);
    const CTensor f = dft2(h);
    BandDecomposition out;
    const BandMask* ms[3] = {&masks.low, &masks.mid, &masks.high};
    Tensor* ts[3] = {&out.low, &out.mid, &out.high};
    for (int b = 0; b < 3; ++b) {
        Idft2Result r = idft2(apply_mask(f, *ms[b]));
        out.max_imag_residual = std::max(out.max_imag_residual, r.imag_residual);
        *ts[b] = std::move(r.real);
    }
    if (out.max_imag_residual > 1e-9)
        throw std::runtime_error("band_decompose: imaginary residual " +
                                 std::to_string(out.max_imag_residual) +
                                 " exceeds 1e-9; band masks are not conjugate-symmetric");
    return out;
}

// Complex frequency response of a k x k kernel on an H x W grid: the kernel
// is zero-padded, circularly centered so its center tap sits at (0, 0), and
// transformed; the result is centered like dft2 output.
inline CTensor kernel_transfer_function(const Tensor& kernel, std::size_t height,
                                        std::size_t width) {
    if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1))
        throw ShapeError("kernel_transfer_function expects a square k x k kernel, got " +
                         detail::shape_str(kernel.shape));
    const std::size_t k = kernel.dim(0);
    if (k % 2 == 0)
        throw std::invalid_argument("kernel_transfer_function: k must be odd, got " +
                                    std::to_string(k));
    if (k > height || k > width)
        throw ShapeError("kernel_transfer_function: kernel " + std::to_string(k) +
                         " exceeds grid " + std::to_string(height) + "x" +
                         std::to_string(width));

    Tensor padded({1, height, width});
    const long c = static_cast<long>((k - 1) / 2);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t ii =
            static_cast<std::size_t>(((static_cast<long>(i) - c) % static_cast<long>(height) +
                                      static_cast<long>(height)) %
                                     static_cast<long>(height));
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t jj =
                static_cast<std::size_t>(((static_cast<long>(j) - c) % static_cast<long>(width) +
                                          static_cast<long>(width)) %
                                         static_cast<long>(width));
            padded.at(std::size_t{0}, ii, jj) = kernel.at(i, j);
        }
    }
    return dft2(padded);
}

// Parseval check helper: spatial energy and (1/(H*W))-scaled spectral energy.
inline double spatial_energy(const Tensor& h) {
    double e = 0.0;
    for (double v : h.values) e += v * v;
    return e;
}

inline double spectral_energy(const CTensor& f) {
    double e = 0.0;
    for (const auto& z : f.values) e += std::norm(z);
    return e / (static_cast<double>(f.dim(1)) * static_cast<double>(f.dim(2)));
}

}  // namespace fad
