#pragma once

#include <cstdint>

#include "bvae/generative.hpp"
#include "bvae/linear_bvae.hpp"
#include "bvae/rng.hpp"

namespace bvae::testkit {

inline Matrix normal_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
    const CounterStream rng(seed, 0x7e57);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal(static_cast<std::uint64_t>(i));
    return m;
}

inline Matrix uniform_matrix(Index rows, Index cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    const CounterStream rng(seed, 0x0417);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.uniform(static_cast<std::uint64_t>(i));
    return m;
}

inline LinearParams random_params(Index n, Index k, std::uint64_t seed, double scale = 0.5) {
    return LinearParams::unflatten(normal_matrix(LinearParams::flat_size(n, k), 1, seed, scale).col(0), n, k);
}

/// Random parameters with b_mu = b_D = 0, the setting the closed-form errors assume.
inline LinearParams random_zero_bias_params(Index n, Index k, std::uint64_t seed, double scale = 0.5) {
    LinearParams p = random_params(n, k, seed, scale);
    p.enc.b_mu.setZero();
    p.dec.b_d.setZero();
    return p;
}

inline GroundTruthModel random_model(Index n, Index k, std::uint64_t seed) {
    return GroundTruthModel(normal_matrix(n, k, seed ^ 0xA11CE));
}

inline Matrix random_spd(Index n, std::uint64_t seed) {
    const Matrix a = normal_matrix(n, n, seed);
    Matrix s = a * a.transpose();
    s.diagonal().array() += static_cast<double>(n);
    return s;
}

}  // namespace bvae::testkit
