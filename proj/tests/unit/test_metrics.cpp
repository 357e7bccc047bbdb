#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bvae/gaussian.hpp"
#include "bvae/metrics.hpp"
#include "fixtures.hpp"

using namespace bvae;
using bvae::testkit::random_model;
using bvae::testkit::random_zero_bias_params;

namespace {

// Stationary encoder/decoder pair built from the top-k eigenpairs of Sigma_x.
LinearParams eigen_solution(const Matrix& sigma_x, Index k, double beta) {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_x);
    const Index n = sigma_x.rows();
    Matrix d(n, k);
    for (Index i = 0; i < k; ++i) {
        d.col(i) = es.eigenvectors().col(n - 1 - i) * std::sqrt(std::max(es.eigenvalues()(n - 1 - i) - beta, 0.0));
    }
    LinearParams p = LinearParams::zeros(n, k);
    p.dec.d = d;
    p.enc = optimal_encoder(d, beta);
    return p;
}

}  // namespace

TEST(InferenceError, EvidenceIdentity) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const LinearParams p = random_zero_bias_params(5, 2, seed);
        const Matrix s = data_covariance(random_model(5, 2, seed));
        const double mie = inference_error(p.enc, model_posterior(p.dec), s);
        EXPECT_NEAR(mie_via_identity(p.enc, p.dec, s), mie, 1e-8) << seed;
        EXPECT_GE(mie, 0.0);
    }
}

TEST(InferenceError, ZeroWhenEncoderIsPosterior) {
    // Orthogonal mixing columns give a diagonal posterior covariance, which a
    // diagonal encoder can represent exactly.
    Matrix a = Matrix::Zero(4, 2);
    a(0, 0) = 2.0;
    a(1, 0) = 1.0;
    a(2, 1) = 1.5;
    const GroundTruthModel model(a);
    const LinearPosterior post = ground_truth_posterior(model);
    EncoderParams enc = EncoderParams::zeros(4, 2);
    enc.w_mu = post.mean_map();
    enc.b_sigma = post.cov().diagonal().array().log().matrix();
    const Matrix s = data_covariance(model);
    EXPECT_NEAR(inference_error(enc, post, s), 0.0, 1e-12);

    // Swap and flip the latents: the raw error grows, the aligned one does not.
    const SignedPermutation p{{1, 0}, {-1, 1}};
    const EncoderParams scrambled = relabel(enc, p);
    EXPECT_GT(inference_error(scrambled, post, s), 0.1);
    SignedPermutation found;
    EXPECT_NEAR(aligned_inference_error(scrambled, post, s, &found), 0.0, 1e-12);
    EXPECT_EQ(relabel(scrambled, found).w_mu, enc.w_mu);
}

TEST(InferenceError, MatchesPointwiseKlAverage) {
    // With W_sigma = 0 the KL is quadratic in x, so its average over the 2N
    // sigma points +-sqrt(N) L e_i of N(0, Sigma_x) is the exact expectation.
    const LinearParams p = random_zero_bias_params(3, 2, 4);
    EncoderParams enc = p.enc;
    enc.w_sigma.setZero();
    const GroundTruthModel model = random_model(3, 2, 4);
    const Matrix s = data_covariance(model);
    const LinearPosterior post = ground_truth_posterior(model);
    const Matrix l = Eigen::LLT<Matrix>(s).matrixL();
    const Matrix q_cov = enc.b_sigma.array().exp().matrix().asDiagonal();
    double sum = 0.0;
    for (Index i = 0; i < 3; ++i) {
        for (const double sign : {-1.0, 1.0}) {
            const Vector x = sign * std::sqrt(3.0) * l.col(i);
            sum += gaussian_kl(Gaussian(enc.w_mu * x, q_cov), post.at(x));
        }
    }
    EXPECT_NEAR(inference_error(enc, post, s), sum / 6.0, 1e-10);
}

TEST(InferenceError, RequiresZeroMeanBias) {
    LinearParams p = random_zero_bias_params(3, 2, 1);
    p.enc.b_mu(0) = 1e-3;
    const Matrix s = Matrix::Identity(3, 3);
    EXPECT_THROW(inference_error(p.enc, ground_truth_posterior(GroundTruthModel(Matrix::Zero(3, 2))), s),
                 std::invalid_argument);
    p = random_zero_bias_params(3, 2, 1);
    p.dec.b_d(2) = 1e-3;
    EXPECT_THROW(model_posterior(p.dec), std::invalid_argument);
    EXPECT_THROW(data_log_likelihood(p.dec, s), std::invalid_argument);
}

TEST(InferenceError, ModelErrorVanishesAtBetaOne) {
    const Matrix s = data_covariance(GroundTruthModel::from_formula(16, 2, 0.5, 0.5));
    const LinearParams p = eigen_solution(s, 2, 1.0);
    EXPECT_NEAR(inference_error(p.enc, model_posterior(p.dec), s), 0.0, 1e-10);
    const LinearParams q = eigen_solution(s, 2, 2.0);
    EXPECT_GT(inference_error(q.enc, model_posterior(q.dec), s), 1e-3);
}

TEST(InferenceError, WideModelTrueErrorAtOptimum) {
    // N = 128, k = 2, A = (1 + delta) / 2: the aligned true error of the optimum
    // is 19.1845 at beta = 1 and 19.1749 at the next grid point up.
    const GroundTruthModel model = GroundTruthModel::from_formula(128, 2, 0.5, 0.5);
    const Matrix s = data_covariance(model);
    const LinearPosterior post = ground_truth_posterior(model);
    const LinearParams at1 = eigen_solution(s, 2, 1.0);
    const LinearParams above = eigen_solution(s, 2, 1.2115276586285881);
    EXPECT_NEAR(aligned_inference_error(at1.enc, post, s), 19.1845, 1e-3);
    EXPECT_NEAR(aligned_inference_error(above.enc, post, s), 19.1749, 1e-3);
}

TEST(InferenceError, TwoByTwoLinearCurve) {
    // A = 2 delta + 0.73 with N = k = 2.
    const GroundTruthModel model = GroundTruthModel::from_formula(2, 2, 2.0, 0.73);
    const Matrix s = data_covariance(model);
    const LinearPosterior post = ground_truth_posterior(model);
    const std::vector<std::pair<double, double>> expected{{0.2, 5.739}, {0.5, 5.025}, {1.0, 4.678},
                                                          {2.0, 4.725}, {4.0, 5.843}, {8.0, 8.672}};
    for (const auto& [beta, tie] : expected) {
        const LinearParams p = eigen_solution(s, 2, beta);
        EXPECT_NEAR(aligned_inference_error(p.enc, post, s), tie, 2e-3) << beta;
    }
}

TEST(DataLogLikelihood, MatchesDenseFormula) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const LinearParams p = random_zero_bias_params(5, 2, seed);
        const Matrix s = data_covariance(random_model(5, 2, seed));
        Matrix c = p.dec.d * p.dec.d.transpose();
        c.diagonal().array() += 1.0;
        const double dense = -0.5 * (5.0 * std::log(2.0 * std::numbers::pi) + log_det_spd(c) +
                                     (inverse_spd(c) * s).trace());
        EXPECT_NEAR(data_log_likelihood(p.dec, s), dense, 1e-10);
    }
}

TEST(DataLogLikelihood, MaximizedByTrueCovariance) {
    // With D D^T + I = Sigma_x the expected log-likelihood is -(N ln 2 pi + ln|S| + N) / 2.
    const GroundTruthModel model = random_model(4, 4, 2);
    const Matrix s = data_covariance(model);
    DecoderParams dec = DecoderParams::zeros(4, 4);
    dec.d = model.mixing();
    const double best = data_log_likelihood(dec, s);
    EXPECT_NEAR(best, -0.5 * (4.0 * std::log(2.0 * std::numbers::pi) + log_det_spd(s) + 4.0), 1e-10);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        dec.d = testkit::normal_matrix(4, 4, seed);
        EXPECT_LT(data_log_likelihood(dec, s), best);
    }
}

TEST(ElboTerms, ConsistentWithObjective) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const LinearParams p = testkit::random_params(4, 2, seed);
        const Matrix s = data_covariance(random_model(4, 2, seed));
        const ElboTerms t = elbo_terms(p.enc, p.dec, s);
        EXPECT_NEAR(t.elbo, t.reconstruction - t.cond_indep_loss, 1e-12);
        EXPECT_GE(t.cond_indep_loss, 0.0);
        for (const double beta : {0.5, 1.0, 3.0}) {
            EXPECT_NEAR(objective_full(p.enc, p.dec, s, beta), t.reconstruction - beta * t.cond_indep_loss, 1e-9);
        }
    }
}

TEST(ElboTerms, ElboBoundsLikelihood) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const LinearParams p = random_zero_bias_params(4, 2, seed);
        const Matrix s = data_covariance(random_model(4, 2, seed));
        EXPECT_LE(elbo_terms(p.enc, p.dec, s).elbo, data_log_likelihood(p.dec, s) + 1e-12);
    }
}
