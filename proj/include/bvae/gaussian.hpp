#pragma once

#include <Eigen/Dense>

namespace bvae {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Multivariate normal N(mean, cov). The covariance is symmetrized on
/// construction and must admit a Cholesky factorization; the factor is kept
/// for solves and log-determinants.
class Gaussian {
public:
    Gaussian(Vector mean, Matrix cov);

    static Gaussian standard(Index dim);

    Index dim() const { return mean_.size(); }
    const Vector& mean() const { return mean_; }
    const Matrix& cov() const { return cov_; }
    const Eigen::LLT<Matrix>& factor() const { return llt_; }
    double log_det() const { return log_det_; }

    double log_density(const Eigen::Ref<const Vector>& x) const;

private:
    Vector mean_;
    Matrix cov_;
    Eigen::LLT<Matrix> llt_;
    double log_det_ = 0.0;
};

/// KL(p || q) in closed form.
double gaussian_kl(const Gaussian& p, const Gaussian& q);

/// Conditions a joint over (s, x), with s occupying the first `split` coordinates,
/// on x = x_value.
Gaussian condition_joint(const Gaussian& joint, Index split, const Vector& x_value);

/// Marginal over coordinates [begin, begin + size).
Gaussian marginal(const Gaussian& joint, Index begin, Index size);

/// log det of a symmetric positive-definite matrix via Cholesky; throws if the
/// factorization fails.
double log_det_spd(const Matrix& m);

/// Inverse of a symmetric positive-definite matrix via Cholesky.
Matrix inverse_spd(const Matrix& m);

/// Max-abs gap between (I_N + UV)^{-1} U and U (I_k + VU)^{-1}, scaled by max(1, max-abs of the result).
double push_through_gap(const Matrix& u, const Matrix& v);

/// Max-abs gap between (B + UV)^{-1} and B^{-1} - B^{-1} U (I_k + V B^{-1} U)^{-1} V B^{-1},
/// scaled the same way.
double woodbury_gap(const Matrix& b, const Matrix& u, const Matrix& v);

inline constexpr double kIdentityTolerance = 1e-10;

inline bool verify_push_through(const Matrix& u, const Matrix& v) {
    return push_through_gap(u, v) < kIdentityTolerance;
}

inline bool verify_woodbury(const Matrix& b, const Matrix& u, const Matrix& v) {
    return woodbury_gap(b, u, v) < kIdentityTolerance;
}

}  // namespace bvae
