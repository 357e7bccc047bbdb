#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bvae/gaussian.hpp"

namespace bvae {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
    Index rows = 0;
    Index cols = 0;
    Matrix pixels;  // one image per row, row-major pixels scaled to [0, 1]
};

/// Big-endian IDX image file. Throws std::runtime_error on a bad magic number,
/// a truncated file or trailing bytes.
IdxImages load_idx_images(const std::string& path);

std::vector<std::uint8_t> load_idx_labels(const std::string& path);

struct DigitColumns {
    Matrix mixing;                     // (rows * cols) x 10, column c is digit c
    std::array<std::size_t, 10> indices{};  // position of each chosen image in the file
};

/// First image of each class 0-9 in label-file order.
DigitColumns first_digit_per_class(const IdxImages& images, const std::vector<std::uint8_t>& labels);

}  // namespace bvae
