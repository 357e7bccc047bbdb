#include "bvae/mnist.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

namespace bvae {

namespace {

std::vector<std::uint8_t> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open IDX file: " + path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::string& path) {
    if (offset + 4 > bytes.size()) {
        throw std::runtime_error("truncated IDX header: " + path);
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void check_magic(std::uint32_t got, std::uint32_t want, const std::string& path) {
    if (got != want) {
        throw std::runtime_error("bad IDX magic number in " + path + ": expected " + std::to_string(want) +
                                 ", got " + std::to_string(got));
    }
}

void check_payload(std::size_t have, std::size_t header, std::size_t expected, const std::string& path) {
    if (have != header + expected) {
        throw std::runtime_error("IDX payload size mismatch in " + path + ": expected " +
                                 std::to_string(expected) + " bytes, found " + std::to_string(have - header));
    }
}

}  // namespace

IdxImages load_idx_images(const std::string& path) {
    const auto bytes = read_all(path);
    check_magic(read_be32(bytes, 0, path), kIdxImageMagic, path);
    const std::size_t count = read_be32(bytes, 4, path);
    const std::size_t rows = read_be32(bytes, 8, path);
    const std::size_t cols = read_be32(bytes, 12, path);
    if (rows == 0 || cols == 0) {
        throw std::runtime_error("IDX image dimensions must be nonzero: " + path);
    }
    check_payload(bytes.size(), 16, count * rows * cols, path);

    IdxImages out;
    out.rows = static_cast<Index>(rows);
    out.cols = static_cast<Index>(cols);
    out.pixels.resize(static_cast<Index>(count), static_cast<Index>(rows * cols));
    std::size_t pos = 16;
    for (Index i = 0; i < out.pixels.rows(); ++i) {
        for (Index j = 0; j < out.pixels.cols(); ++j) {
            out.pixels(i, j) = static_cast<double>(bytes[pos++]) / 255.0;
        }
    }
    return out;
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
    const auto bytes = read_all(path);
    check_magic(read_be32(bytes, 0, path), kIdxLabelMagic, path);
    const std::size_t count = read_be32(bytes, 4, path);
    check_payload(bytes.size(), 8, count, path);
    return {bytes.begin() + 8, bytes.end()};
}

DigitColumns first_digit_per_class(const IdxImages& images, const std::vector<std::uint8_t>& labels) {
    if (static_cast<Index>(labels.size()) != images.pixels.rows()) {
        throw std::runtime_error("IDX image and label counts differ");
    }
    DigitColumns out;
    out.mixing.resize(images.pixels.cols(), 10);
    std::array<bool, 10> seen{};
    std::size_t found = 0;
    for (std::size_t i = 0; i < labels.size() && found < 10; ++i) {
        const auto c = labels[i];
        if (c > 9) {
            throw std::runtime_error("IDX label out of range: " + std::to_string(c));
        }
        if (!seen[c]) {
            seen[c] = true;
            out.indices[c] = i;
            out.mixing.col(c) = images.pixels.row(static_cast<Index>(i)).transpose();
            ++found;
        }
    }
    if (found < 10) {
        throw std::runtime_error("IDX labels do not contain every digit 0-9");
    }
    return out;
}

}  // namespace bvae
