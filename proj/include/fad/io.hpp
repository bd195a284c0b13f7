#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fad/spectral.hpp"
#include "fad/tensor.hpp"

// Flat little-endian float64 arrays plus plain-text debug exports (P2 PGM
// images and CSV matrices).

namespace fad {

inline void write_f64_array(const std::string& path, const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (double v : values) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

inline std::vector<double> read_f64_array(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::vector<double> values;
    unsigned char b[8];
    while (in.read(reinterpret_cast<char*>(b), 8)) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        values.push_back(std::bit_cast<double>(bits));
    }
    if (in.gcount() != 0) throw std::runtime_error("trailing bytes in " + path);
    return values;
}

// Plain-text PGM (P2), gray levels linearly mapped from [min, max] to 0..255.
inline void write_pgm(const std::string& path, const std::vector<double>& values,
                      std::size_t height, std::size_t width) {
    if (values.size() != height * width)
        throw ShapeError("write_pgm: value count does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
    double lo = values.empty() ? 0.0 : values[0], hi = lo;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P2\n" << width << " " << height << "\n255\n";
    for (std::size_t i = 0; i < height; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            const int g = static_cast<int>((values[i * width + j] - lo) * scale + 0.5);
            out << std::clamp(g, 0, 255) << (j + 1 == width ? "" : " ");
        }
        out << "\n";
    }
}

// Row-major CSV with 6 significant digits.
inline void write_csv_matrix(const std::string& path, const std::vector<double>& values,
                             std::size_t height, std::size_t width) {
    if (values.size() != height * width)
        throw ShapeError("write_csv_matrix: value count does not match " +
                         std::to_string(height) + "x" + std::to_string(width));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    char buf[64];
    for (std::size_t i = 0; i < height; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            std::snprintf(buf, sizeof(buf), "%.6g", values[i * width + j]);
            out << buf << (j + 1 == width ? "" : ",");
        }
        out << "\n";
    }
}

inline std::vector<double> mask_as_doubles(const BandMask& m) {
    std::vector<double> out(m.values.size());
    for (std::size_t i = 0; i < m.values.size(); ++i) out[i] = m.values[i];
    return out;
}

inline std::vector<double> magnitude_plane(const CTensor& f, std::size_t channel = 0) {
    const std::size_t h = f.dim(1), w = f.dim(2);
    std::vector<double> out(h * w);
    for (std::size_t i = 0; i < h * w; ++i) out[i] = std::abs(f.values[channel * h * w + i]);
    return out;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

}  // namespace fad
