#include "bvae/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bvae {

namespace {

Eigen::LLT<Matrix> factorize(const Matrix& m, const char* what) {
    if (m.rows() != m.cols()) {
        throw std::invalid_argument(std::string(what) + ": matrix is not square");
    }
    if (!m.allFinite()) {
        throw std::invalid_argument(std::string(what) + ": matrix has non-finite entries");
    }
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) {
        throw std::domain_error(std::string(what) + ": matrix is not positive definite");
    }
    return llt;
}

double log_det_from(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Matrix invert_general(const Matrix& m, const char* what) {
    Eigen::FullPivLU<Matrix> lu(m);
    if (!lu.isInvertible()) {
        throw std::domain_error(std::string(what) + ": matrix is singular");
    }
    return lu.inverse();
}

}  // namespace

Gaussian::Gaussian(Vector mean, Matrix cov) : mean_(std::move(mean)) {
    if (cov.rows() != mean_.size() || cov.cols() != mean_.size()) {
        throw std::invalid_argument("Gaussian: covariance shape does not match mean dimension");
    }
    cov_ = 0.5 * (cov + cov.transpose());
    llt_ = factorize(cov_, "Gaussian");
    log_det_ = log_det_from(llt_);
}

Gaussian Gaussian::standard(Index dim) {
    return Gaussian(Vector::Zero(dim), Matrix::Identity(dim, dim));
}

double Gaussian::log_density(const Eigen::Ref<const Vector>& x) const {
    const Vector diff = x - mean_;
    const Vector white = llt_.matrixL().solve(diff);
    const auto d = static_cast<double>(dim());
    return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det_ + white.squaredNorm());
}

double gaussian_kl(const Gaussian& p, const Gaussian& q) {
    if (p.dim() != q.dim()) {
        throw std::invalid_argument("gaussian_kl: dimension mismatch");
    }
    const Matrix trace_arg = q.factor().solve(p.cov());
    const Vector diff = q.mean() - p.mean();
    const double mahalanobis = diff.dot(q.factor().solve(diff));
    const double kl = 0.5 * (trace_arg.trace() + mahalanobis - static_cast<double>(p.dim()) +
                             q.log_det() - p.log_det());
    // Roundoff can push identical inputs a hair below zero.
    return kl < 0.0 ? 0.0 : kl;
}

Gaussian condition_joint(const Gaussian& joint, Index split, const Vector& x_value) {
    const Index n = joint.dim() - split;
    if (split <= 0 || n <= 0) {
        throw std::invalid_argument("condition_joint: split index out of range");
    }
    if (x_value.size() != n) {
        throw std::invalid_argument("condition_joint: conditioning value has wrong dimension");
    }
    const auto& mu = joint.mean();
    const auto& cov = joint.cov();
    const Matrix sigma_x = cov.bottomRightCorner(n, n);
    const Matrix cross = cov.bottomLeftCorner(n, split);  // Cov(x, s)
    Eigen::LLT<Matrix> llt_x(sigma_x);
    if (llt_x.info() != Eigen::Success) {
        throw std::domain_error("condition_joint: conditioning block is singular");
    }
    const Vector mean =
        mu.head(split) + cross.transpose() * llt_x.solve(x_value - mu.tail(n));
    const Matrix cond_cov = cov.topLeftCorner(split, split) - cross.transpose() * llt_x.solve(cross);
    return {mean, cond_cov};
}

Gaussian marginal(const Gaussian& joint, Index begin, Index size) {
    if (begin < 0 || size <= 0 || begin + size > joint.dim()) {
        throw std::invalid_argument("marginal: coordinate range out of bounds");
    }
    return {joint.mean().segment(begin, size), joint.cov().block(begin, begin, size, size)};
}

double log_det_spd(const Matrix& m) {
    return log_det_from(factorize(m, "log_det_spd"));
}

Matrix inverse_spd(const Matrix& m) {
    const auto llt = factorize(m, "inverse_spd");
    return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

double push_through_gap(const Matrix& u, const Matrix& v) {
    if (u.cols() != v.rows() || u.rows() != v.cols()) {
        throw std::invalid_argument("push_through: U must be N x k and V k x N");
    }
    const Index n = u.rows();
    const Index k = u.cols();
    const Matrix left = invert_general(Matrix::Identity(n, n) + u * v, "push_through") * u;
    const Matrix right = u * invert_general(Matrix::Identity(k, k) + v * u, "push_through");
    return (left - right).cwiseAbs().maxCoeff() / std::max(1.0, right.cwiseAbs().maxCoeff());
}

double woodbury_gap(const Matrix& b, const Matrix& u, const Matrix& v) {
    if (b.rows() != b.cols() || u.rows() != b.rows() || v.cols() != b.rows() || u.cols() != v.rows()) {
        throw std::invalid_argument("woodbury: incompatible shapes");
    }
    const Index k = u.cols();
    const Matrix b_inv = invert_general(b, "woodbury");
    const Matrix direct = invert_general(b + u * v, "woodbury");
    const Matrix capacitance = invert_general(Matrix::Identity(k, k) + v * b_inv * u, "woodbury");
    const Matrix expanded = b_inv - b_inv * u * capacitance * v * b_inv;
    return (direct - expanded).cwiseAbs().maxCoeff() / std::max(1.0, direct.cwiseAbs().maxCoeff());
}

}  // namespace bvae
