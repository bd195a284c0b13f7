#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fad/episodes.hpp"
#include "fad/tensor.hpp"

// Reader/writer for the big-endian IDX image and label format. Pixels are
// scaled to [0, 1] on load.

namespace fad {

class IdxError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IdxMagicError : public IdxError {
  public:
    using IdxError::IdxError;
};

class IdxTruncatedError : public IdxError {
  public:
    using IdxError::IdxError;
};

class IdxCountMismatchError : public IdxError {
  public:
    using IdxError::IdxError;
};

namespace detail {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

inline std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw IdxTruncatedError("idx: truncated header in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IdxError("idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IdxError("idx: cannot open " + labels_path);

    const std::uint32_t img_magic = detail::read_u32_be(img, images_path);
    if (img_magic != detail::kIdxImageMagic)
        throw IdxMagicError("idx: bad image magic " + std::to_string(img_magic) + " in " +
                            images_path);
    const std::uint32_t count = detail::read_u32_be(img, images_path);
    const std::uint32_t rows = detail::read_u32_be(img, images_path);
    const std::uint32_t cols = detail::read_u32_be(img, images_path);

    const std::uint32_t lab_magic = detail::read_u32_be(lab, labels_path);
    if (lab_magic != detail::kIdxLabelMagic)
        throw IdxMagicError("idx: bad label magic " + std::to_string(lab_magic) + " in " +
                            labels_path);
    const std::uint32_t lab_count = detail::read_u32_be(lab, labels_path);
    if (lab_count != count)
        throw IdxCountMismatchError("idx: " + std::to_string(count) + " images but " +
                                    std::to_string(lab_count) + " labels");

    std::vector<unsigned char> pixels(static_cast<std::size_t>(count) * rows * cols);
    img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (img.gcount() != static_cast<std::streamsize>(pixels.size()))
        throw IdxTruncatedError("idx: truncated image data in " + images_path);

    std::vector<unsigned char> labels(count);
    lab.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (lab.gcount() != static_cast<std::streamsize>(labels.size()))
        throw IdxTruncatedError("idx: truncated label data in " + labels_path);

    Dataset out;
    out.reserve(count);
    for (std::uint32_t n = 0; n < count; ++n) {
        Tensor image({1, rows, cols});
        const unsigned char* src = &pixels[static_cast<std::size_t>(n) * rows * cols];
        for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i)
            image.values[i] = static_cast<double>(src[i]) / 255.0;
        out.push_back(LabeledImage{std::move(image), static_cast<int>(labels[n])});
    }
    return out;
}

// Writes a dataset in the same layout. Pixel values are affinely mapped from
// the dataset-wide [min, max] range onto 0..255, so synthetic data survives
// the byte quantization in recognizable form.
inline void save_idx(const Dataset& data, const std::string& images_path,
                     const std::string& labels_path) {
    if (data.empty()) throw std::invalid_argument("save_idx: empty dataset");
    const std::size_t rows = data[0].image.dim(1), cols = data[0].image.dim(2);
    double lo = data[0].image.values[0], hi = lo;
    for (const auto& ex : data) {
        if (ex.image.dim(1) != rows || ex.image.dim(2) != cols || ex.image.dim(0) != 1)
            throw ShapeError("save_idx: images must share a single-channel shape");
        if (ex.label < 0 || ex.label > 255)
            throw std::invalid_argument("save_idx: label " + std::to_string(ex.label) +
                                        " does not fit in a byte");
        for (double v : ex.image.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IdxError("idx: cannot write " + images_path);
    detail::write_u32_be(img, detail::kIdxImageMagic);
    detail::write_u32_be(img, static_cast<std::uint32_t>(data.size()));
    detail::write_u32_be(img, static_cast<std::uint32_t>(rows));
    detail::write_u32_be(img, static_cast<std::uint32_t>(cols));
    for (const auto& ex : data)
        for (double v : ex.image.values) {
            const double q = (v - lo) * scale;
            const unsigned char byte =
                static_cast<unsigned char>(std::clamp(q + 0.5, 0.0, 255.0));
            img.put(static_cast<char>(byte));
        }

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw IdxError("idx: cannot write " + labels_path);
    detail::write_u32_be(lab, detail::kIdxLabelMagic);
    detail::write_u32_be(lab, static_cast<std::uint32_t>(data.size()));
    for (const auto& ex : data) lab.put(static_cast<char>(ex.label));
}

}  // namespace fad
