#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "bvae/generative.hpp"

namespace bvae {

/// A_ij = diag * delta_ij + offset.
struct FormulaMixing {
    Index n = 2;
    Index k = 2;
    double diag = 1.0;
    double offset = 0.0;
};

struct ExplicitMixing {
    Matrix a;
};

/// Columns are the first image of each digit 0-9 from an IDX pair.
struct MnistMixing {
    std::string images;
    std::string labels;
};

using MixingSpec = std::variant<FormulaMixing, ExplicitMixing, MnistMixing>;

struct MixingOutcome {
    GroundTruthModel model;
    std::optional<std::array<std::size_t, 10>> mnist_indices;
};

MixingOutcome make_model(const MixingSpec& spec);

struct Dataset {
    Matrix x;        // n x N
    Matrix sources;  // n x k
    GroundTruthModel model;
    std::optional<std::array<std::size_t, 10>> mnist_indices;
};

Dataset build_dataset(const MixingSpec& spec, Index n, std::uint64_t seed);

}  // namespace bvae
