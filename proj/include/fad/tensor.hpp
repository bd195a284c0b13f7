#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fad {

// Thrown whenever two operands disagree on dimensions. The message names the
// offending extents so callers can tell which axis went wrong.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

}  // namespace detail

// Dense row-major real tensor. Feature maps use the canonical C x H x W
// layout; vectors and matrices are rank 1 and 2.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), values(count(shape), fill) {}

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    // Checked construction from raw values; rejects count mismatches and
    // non-finite entries.
    static Tensor from_values(std::vector<std::size_t> s, std::vector<double> v) {
        if (v.size() != count(s))
            throw ShapeError("tensor value count " + std::to_string(v.size()) +
                             " does not match shape " + detail::shape_str(s));
        for (double x : v)
            if (!std::isfinite(x)) throw std::invalid_argument("tensor value not finite");
        Tensor t;
        t.shape = std::move(s);
        t.values = std::move(v);
        return t;
    }

    std::size_t size() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& at(std::size_t i) { return values[i]; }
    double at(std::size_t i) const { return values[i]; }

    double& at(std::size_t i, std::size_t j) { return values[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * shape[1] + j]; }

    double& at(std::size_t c, std::size_t i, std::size_t j) {
        return values[(c * shape[1] + i) * shape[2] + j];
    }
    double at(std::size_t c, std::size_t i, std::size_t j) const {
        return values[(c * shape[1] + i) * shape[2] + j];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Dense row-major complex tensor, same layout rules as Tensor.
struct CTensor {
    std::vector<std::size_t> shape;
    std::vector<std::complex<double>> values;

    CTensor() = default;
    explicit CTensor(std::vector<std::size_t> s, std::complex<double> fill = {0.0, 0.0})
        : shape(std::move(s)), values(Tensor::count(shape), fill) {}

    std::size_t size() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    std::complex<double>& at(std::size_t c, std::size_t i, std::size_t j) {
        return values[(c * shape[1] + i) * shape[2] + j];
    }
    std::complex<double> at(std::size_t c, std::size_t i, std::size_t j) const {
        return values[(c * shape[1] + i) * shape[2] + j];
    }
};

// Weights of one convolutional layer: out x in x k x k plus an optional
// per-output bias. k must be odd so "same" padding is symmetric.
struct ConvKernelSet {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t k = 1;
    std::vector<double> weights;
    std::vector<double> bias;  // empty or out_channels entries

    static ConvKernelSet zeros(std::size_t out, std::size_t in, std::size_t k,
                               bool with_bias = false) {
        if (k % 2 == 0 || k < 1)
            throw std::invalid_argument("kernel size must be odd and >= 1, got " +
                                        std::to_string(k));
        ConvKernelSet s;
        s.out_channels = out;
        s.in_channels = in;
        s.k = k;
        s.weights.assign(out * in * k * k, 0.0);
        if (with_bias) s.bias.assign(out, 0.0);
        return s;
    }

    double& w(std::size_t o, std::size_t c, std::size_t p, std::size_t q) {
        return weights[((o * in_channels + c) * k + p) * k + q];
    }
    double w(std::size_t o, std::size_t c, std::size_t p, std::size_t q) const {
        return weights[((o * in_channels + c) * k + p) * k + q];
    }

    bool has_bias() const { return !bias.empty(); }
    std::size_t weight_count() const { return weights.size(); }
    std::size_t param_count() const { return weights.size() + bias.size(); }
};

// 2D cross-correlation (no kernel flip) with zero padding of (k-1)/2, stride
// 1, so the spatial size is preserved.
inline Tensor conv2d_same(const Tensor& input, const ConvKernelSet& kernels) {
    if (input.rank() != 3)
        throw ShapeError("conv2d_same expects C x H x W input, got " +
                         detail::shape_str(input.shape));
    const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (kernels.in_channels != cin)
        throw ShapeError("conv2d_same: kernel in_channels " +
                         std::to_string(kernels.in_channels) + " != input channels " +
                         std::to_string(cin));
    if (kernels.weights.size() !=
        kernels.out_channels * kernels.in_channels * kernels.k * kernels.k)
        throw ShapeError("conv2d_same: kernel weight count " +
                         std::to_string(kernels.weights.size()) + " does not match " +
                         std::to_string(kernels.out_channels) + "x" +
                         std::to_string(kernels.in_channels) + "x" + std::to_string(kernels.k) +
                         "x" + std::to_string(kernels.k));

    const std::size_t k = kernels.k;
    const long pad = static_cast<long>((k - 1) / 2);
    Tensor out({kernels.out_channels, h, w});
    for (std::size_t o = 0; o < kernels.out_channels; ++o) {
        const double b = kernels.has_bias() ? kernels.bias[o] : 0.0;
        for (std::size_t c = 0; c < cin; ++c) {
            const double* in_plane = &input.values[(c * h) * w];
            const double* wk = &kernels.weights[((o * cin + c) * k) * k];
            for (std::size_t i = 0; i < h; ++i) {
                double* out_row = &out.values[(o * h + i) * w];
                for (std::size_t p = 0; p < k; ++p) {
                    const long ii = static_cast<long>(i) + static_cast<long>(p) - pad;
                    if (ii < 0 || ii >= static_cast<long>(h)) continue;
                    const double* in_row = in_plane + ii * static_cast<long>(w);
                    const double* wrow = wk + p * k;
                    for (std::size_t q = 0; q < k; ++q) {
                        const double wv = wrow[q];
                        if (wv == 0.0) continue;
                        const long off = static_cast<long>(q) - pad;
                        const std::size_t j0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
                        const std::size_t j1 =
                            off > 0 ? w - static_cast<std::size_t>(off) : w;
                        for (std::size_t j = j0; j < j1; ++j)
                            out_row[j] += wv * in_row[static_cast<long>(j) + off];
                    }
                }
            }
        }
        if (b != 0.0) {
            double* plane = &out.values[(o * h) * w];
            for (std::size_t i = 0; i < h * w; ++i) plane[i] += b;
        }
    }
    return out;
}

// Elementwise sum. Summation order inside one call is fixed, so the result is
// bitwise commutative.
inline Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: shape " + detail::shape_str(a.shape) + " != " +
                         detail::shape_str(b.shape));
    Tensor out = a;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += b.values[i];
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.values) v *= s;
    return out;
}

inline double reduce_mean(const Tensor& t) {
    if (t.size() == 0) throw std::invalid_argument("reduce_mean: empty tensor");
    double sum = 0.0;
    for (double v : t.values) sum += v;
    return sum / static_cast<double>(t.size());
}

// Per-row index of the maximum of an N x M matrix; ties break toward the
// lowest index.
inline std::vector<std::size_t> argmax_rows(const Tensor& t) {
    if (t.rank() != 2 || t.size() == 0)
        throw std::invalid_argument("argmax_rows: expects a non-empty matrix");
    const std::size_t n = t.dim(0), m = t.dim(1);
    std::vector<std::size_t> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = t.at(i, std::size_t{0});
        for (std::size_t j = 1; j < m; ++j) {
            if (t.at(i, j) > best) {
                best = t.at(i, j);
                out[i] = j;
            }
        }
    }
    return out;
}

inline double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.values) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("max_abs_diff: shape " + detail::shape_str(a.shape) + " != " +
                         detail::shape_str(b.shape));
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

}  // namespace fad
