#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fad/episodes.hpp"
#include "fad/idx.hpp"

using namespace fad;
namespace fs = std::filesystem;

namespace {

class IdxTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("fad_idx_test_" + std::to_string(::getpid()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write_bytes(const std::string& p, const std::vector<unsigned char>& bytes) {
        std::ofstream out(p, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }

    fs::path dir_;
};

std::vector<unsigned char> be32(std::uint32_t v) {
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

void append(std::vector<unsigned char>& dst, const std::vector<unsigned char>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

TEST_F(IdxTest, HandBuiltFixtureParsesExactly) {
    // two 2x2 images: all zeros and all 255s
    std::vector<unsigned char> img;
    append(img, be32(0x00000803));
    append(img, be32(2));
    append(img, be32(2));
    append(img, be32(2));
    for (int i = 0; i < 4; ++i) img.push_back(0);
    for (int i = 0; i < 4; ++i) img.push_back(255);
    write_bytes(path("img"), img);

    std::vector<unsigned char> lab;
    append(lab, be32(0x00000801));
    append(lab, be32(2));
    lab.push_back(3);
    lab.push_back(7);
    write_bytes(path("lab"), lab);

    Dataset data = load_idx(path("img"), path("lab"));
    ASSERT_EQ(data.size(), 2u);
    EXPECT_EQ(data[0].label, 3);
    EXPECT_EQ(data[1].label, 7);
    EXPECT_EQ(data[0].image.shape, (std::vector<std::size_t>{1, 2, 2}));
    for (double v : data[0].image.values) EXPECT_EQ(v, 0.0);
    for (double v : data[1].image.values) EXPECT_EQ(v, 1.0);
}

TEST_F(IdxTest, WrongMagicIsDistinctError) {
    std::vector<unsigned char> img;
    append(img, be32(0x00000804));
    append(img, be32(0));
    append(img, be32(2));
    append(img, be32(2));
    write_bytes(path("img"), img);
    std::vector<unsigned char> lab;
    append(lab, be32(0x00000801));
    append(lab, be32(0));
    write_bytes(path("lab"), lab);
    EXPECT_THROW(load_idx(path("img"), path("lab")), IdxMagicError);

    // label magic error too
    std::vector<unsigned char> img2;
    append(img2, be32(0x00000803));
    append(img2, be32(0));
    append(img2, be32(2));
    append(img2, be32(2));
    write_bytes(path("img2"), img2);
    std::vector<unsigned char> lab2;
    append(lab2, be32(0x00000802));
    append(lab2, be32(0));
    write_bytes(path("lab2"), lab2);
    EXPECT_THROW(load_idx(path("img2"), path("lab2")), IdxMagicError);
}

TEST_F(IdxTest, CountMismatchIsDistinctError) {
    std::vector<unsigned char> img;
    append(img, be32(0x00000803));
    append(img, be32(1));
    append(img, be32(1));
    append(img, be32(1));
    img.push_back(42);
    write_bytes(path("img"), img);
    std::vector<unsigned char> lab;
    append(lab, be32(0x00000801));
    append(lab, be32(2));
    lab.push_back(0);
    lab.push_back(1);
    write_bytes(path("lab"), lab);
    EXPECT_THROW(load_idx(path("img"), path("lab")), IdxCountMismatchError);
}

TEST_F(IdxTest, TruncationIsDistinctError) {
    // header promises 2 images of 2x2 but supplies only 5 bytes of pixels
    std::vector<unsigned char> img;
    append(img, be32(0x00000803));
    append(img, be32(2));
    append(img, be32(2));
    append(img, be32(2));
    for (int i = 0; i < 5; ++i) img.push_back(9);
    write_bytes(path("img"), img);
    std::vector<unsigned char> lab;
    append(lab, be32(0x00000801));
    append(lab, be32(2));
    lab.push_back(0);
    lab.push_back(1);
    write_bytes(path("lab"), lab);
    EXPECT_THROW(load_idx(path("img"), path("lab")), IdxTruncatedError);

    // truncated header
    write_bytes(path("img3"), {0x00, 0x00});
    EXPECT_THROW(load_idx(path("img3"), path("lab")), IdxTruncatedError);
}

TEST_F(IdxTest, SaveLoadRoundTripKeepsLabelsAndShape) {
    DomainSpec spec;
    spec.height = spec.width = 8;
    spec.class_ids = {1, 2};
    spec.signatures = {ClassSignature{{Annulus{0.1, 0.4, 1.0}}},
                       ClassSignature{{Annulus{0.6, 1.0, 1.0}}}};
    Dataset data = synth_domain_generate(spec, 2, 3, 920);
    save_idx(data, path("img"), path("lab"));
    Dataset loaded = load_idx(path("img"), path("lab"));
    ASSERT_EQ(loaded.size(), data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(loaded[i].label, data[i].label);
        EXPECT_EQ(loaded[i].image.shape, data[i].image.shape);
        for (double v : loaded[i].image.values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

}  // namespace
