#pragma once

#include <cstdint>

#include "bvae/gaussian.hpp"

namespace bvae {

/// Ground-truth data process x = A s + eta with s ~ N(0, I_k), eta ~ N(0, I_N).
class GroundTruthModel {
public:
    explicit GroundTruthModel(Matrix mixing);

    /// A_ij = diag * delta_ij + offset.
    static GroundTruthModel from_formula(Index n, Index k, double diag, double offset);

    Index data_dim() const { return mixing_.rows(); }
    Index latent_dim() const { return mixing_.cols(); }
    const Matrix& mixing() const { return mixing_; }

private:
    Matrix mixing_;
};

/// Posterior of the form N(F x, E).
class LinearPosterior {
public:
    LinearPosterior(Matrix mean_map, Matrix cov);

    const Matrix& mean_map() const { return mean_map_; }
    const Matrix& cov() const { return cov_; }

    Gaussian at(const Vector& x) const { return {mean_map_ * x, cov_}; }

private:
    Matrix mean_map_;
    Matrix cov_;
};

/// Sigma_x = A A^T + I_N.
Matrix data_covariance(const GroundTruthModel& model);

/// F = (A^T A + I_k)^{-1} A^T, E = (A^T A + I_k)^{-1}.
LinearPosterior ground_truth_posterior(const GroundTruthModel& model);

/// Joint Gaussian over (s, x) with s first.
Gaussian joint_distribution(const GroundTruthModel& model);

struct Samples {
    Matrix x;        // n x N
    Matrix sources;  // n x k
};

/// Row i is drawn from counter streams keyed by (seed, i), so any subset of rows
/// can be regenerated independently.
Samples sample_data(const GroundTruthModel& model, Index n, std::uint64_t seed);

}  // namespace bvae
