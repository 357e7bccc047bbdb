#include "bvae/generative.hpp"

#include <stdexcept>

#include "bvae/rng.hpp"

namespace bvae {

GroundTruthModel::GroundTruthModel(Matrix mixing) : mixing_(std::move(mixing)) {
    if (mixing_.cols() < 1 || mixing_.rows() < mixing_.cols()) {
        throw std::invalid_argument("GroundTruthModel: need N >= k >= 1");
    }
    if (!mixing_.allFinite()) {
        throw std::invalid_argument("GroundTruthModel: mixing matrix has non-finite entries");
    }
}

GroundTruthModel GroundTruthModel::from_formula(Index n, Index k, double diag, double offset) {
    if (k < 1 || n < k) {
        throw std::invalid_argument("GroundTruthModel: need N >= k >= 1");
    }
    Matrix a = Matrix::Constant(n, k, offset);
    for (Index i = 0; i < std::min(n, k); ++i) {
        a(i, i) += diag;
    }
    return GroundTruthModel(std::move(a));
}

LinearPosterior::LinearPosterior(Matrix mean_map, Matrix cov)
    : mean_map_(std::move(mean_map)), cov_(0.5 * (cov + cov.transpose())) {
    if (cov_.rows() != cov_.cols() || mean_map_.rows() != cov_.rows()) {
        throw std::invalid_argument("LinearPosterior: F must be k x N and E k x k");
    }
    if (Eigen::LLT<Matrix>(cov_).info() != Eigen::Success) {
        throw std::domain_error("LinearPosterior: covariance is not positive definite");
    }
}

Matrix data_covariance(const GroundTruthModel& model) {
    const auto& a = model.mixing();
    Matrix sigma = a * a.transpose();
    sigma.diagonal().array() += 1.0;
    return sigma;
}

LinearPosterior ground_truth_posterior(const GroundTruthModel& model) {
    const auto& a = model.mixing();
    Matrix precision = a.transpose() * a;
    precision.diagonal().array() += 1.0;
    const Eigen::LLT<Matrix> llt(precision);
    const Matrix cov = llt.solve(Matrix::Identity(model.latent_dim(), model.latent_dim()));
    return {llt.solve(a.transpose()), cov};
}

Gaussian joint_distribution(const GroundTruthModel& model) {
    const Index n = model.data_dim();
    const Index k = model.latent_dim();
    Matrix cov(k + n, k + n);
    cov.topLeftCorner(k, k).setIdentity();
    cov.bottomLeftCorner(n, k) = model.mixing();
    cov.topRightCorner(k, n) = model.mixing().transpose();
    cov.bottomRightCorner(n, n) = data_covariance(model);
    return {Vector::Zero(k + n), cov};
}

Samples sample_data(const GroundTruthModel& model, Index n, std::uint64_t seed) {
    if (n < 1) {
        throw std::invalid_argument("sample_data: need at least one sample");
    }
    const Index dim = model.data_dim();
    const Index k = model.latent_dim();
    Samples out{Matrix(n, dim), Matrix(n, k)};
    const auto& a = model.mixing();
    for (Index row = 0; row < n; ++row) {
        const CounterStream stream(seed, static_cast<std::uint64_t>(row));
        Vector s(k);
        for (Index j = 0; j < k; ++j) {
            s(j) = stream.normal(static_cast<std::uint64_t>(j));
        }
        Vector x = a * s;
        for (Index i = 0; i < dim; ++i) {
            x(i) += stream.normal(static_cast<std::uint64_t>(k + i));
        }
        out.sources.row(row) = s.transpose();
        out.x.row(row) = x.transpose();
    }
    return out;
}

}  // namespace bvae
