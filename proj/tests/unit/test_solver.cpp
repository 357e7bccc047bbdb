#include <gtest/gtest.h>

#include "bvae/metrics.hpp"
#include "bvae/solver.hpp"
#include "fixtures.hpp"

using namespace bvae;

namespace {

double eigen_optimum(const Matrix& sigma_x, Index k, double beta) {
    // Optimal value of the reduced objective: the top-k eigenvalues above beta
    // contribute lambda - beta - beta ln(lambda / beta).
    const Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_x);
    const Index n = sigma_x.rows();
    double explained = 0.0;
    for (Index i = 0; i < k; ++i) {
        const double lambda = es.eigenvalues()(n - 1 - i);
        if (lambda > beta) explained += lambda - beta - beta * std::log(lambda / beta);
    }
    return -0.5 * (sigma_x.trace() + beta * static_cast<double>(k) - explained);
}

SolverConfig quick(double beta, Index restarts = 3) {
    SolverConfig c;
    c.beta = beta;
    c.n_restarts = restarts;
    return c;
}

}  // namespace

TEST(SolverConfig, ValidateNamesField) {
    SolverConfig c;
    c.beta = 0.0;
    try {
        c.validate();
        FAIL() << "expected throw";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("solver.beta"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("1e-3"), std::string::npos);
    }
    c = SolverConfig{};
    c.n_restarts = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SolverConfig{};
    c.step_rule.lbfgs_memory = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SolverConfig{};
    c.beta = std::numeric_limits<double>::infinity();
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_NO_THROW(SolverConfig{}.validate());
}

TEST(Solver, ReachesEigenOptimum) {
    const GroundTruthModel model = GroundTruthModel::from_formula(8, 2, 0.5, 0.5);
    const Matrix s = data_covariance(model);
    for (const double beta : {0.3, 1.0, 2.5}) {
        const SolveResult r = solve_stationary(model, quick(beta));
        ASSERT_TRUE(r.converged) << beta;
        const auto& best = r.best();
        EXPECT_NEAR(best.diagnostics.objective, eigen_optimum(s, 2, beta), 1e-8) << beta;
        EXPECT_LT(best.diagnostics.residual_max, 1e-6);
        EXPECT_LT(best.diagnostics.grad_norm, 1e-8);
        EXPECT_EQ(best.params.enc.w_sigma.cwiseAbs().maxCoeff() < 1e-6, true);
        // Decoder columns are orthogonal at the optimum.
        const Matrix dtd = best.params.dec.d.transpose() * best.params.dec.d;
        EXPECT_LT(std::abs(dtd(0, 1)), 1e-6);
    }
}

TEST(Solver, TrajectoryIsMonotone) {
    SolverConfig c = quick(1.0, 1);
    c.record_trajectory = true;
    const SolveResult r = solve_stationary(testkit::random_model(5, 2, 3), c);
    const auto& t = r.best().trajectory;
    ASSERT_GT(t.size(), 10u);
    for (std::size_t i = 1; i < t.size(); ++i) {
        EXPECT_GE(t[i], t[i - 1] - 1e-12 * (1.0 + std::abs(t[i - 1]))) << i;
    }
}

TEST(Solver, Deterministic) {
    const GroundTruthModel model = testkit::random_model(6, 2, 1);
    const SolveResult a = solve_stationary(model, quick(1.5));
    const SolveResult b = solve_stationary(model, quick(1.5));
    ASSERT_EQ(a.restarts.size(), b.restarts.size());
    for (std::size_t i = 0; i < a.restarts.size(); ++i) {
        EXPECT_EQ(a.restarts[i].params.flatten(), b.restarts[i].params.flatten());
        EXPECT_EQ(a.restarts[i].seed, b.restarts[i].seed);
    }
    EXPECT_NE(restart_seed(quick(1.0), 0), restart_seed(quick(1.0), 1));
}

TEST(Solver, ReducedSolverAgrees) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const GroundTruthModel model = testkit::random_model(6, 2, seed);
        const SolverConfig c = quick(0.8);
        const SolveResult full = solve_stationary(model, c);
        const ReducedSolution red = solve_reduced(model, c);
        ASSERT_TRUE(red.converged);
        EXPECT_NEAR(full.best().diagnostics.objective, red.objective, 1e-6);
    }
}

TEST(Solver, NullModelAboveOneCollapses) {
    // Sigma_x = I: every eigenvalue is 1, so for beta > 1 the decoder vanishes.
    const GroundTruthModel model(Matrix::Zero(3, 2));
    const SolveResult r = solve_stationary(model, quick(2.0));
    ASSERT_TRUE(r.converged);
    EXPECT_LT(r.best().params.dec.d.cwiseAbs().maxCoeff(), 1e-6);
    const ElboTerms t = elbo_terms(r.best().params.enc, r.best().params.dec, data_covariance(model));
    EXPECT_LT(t.cond_indep_loss, 1e-10);
}

TEST(Solver, NullModelAtBetaOne) {
    const GroundTruthModel model(Matrix::Zero(3, 2));
    SolverConfig c = quick(1.0, 2);
    const SolveResult r = solve_stationary(model, c);
    ASSERT_TRUE(r.converged);
    // The objective is flat to third order in D here, so the decoder only
    // shrinks to about grad_tol^(1/3).
    EXPECT_LT(r.best().params.dec.d.cwiseAbs().maxCoeff(), 1e-2);
    const ElboTerms t = elbo_terms(r.best().params.enc, r.best().params.dec, data_covariance(model));
    EXPECT_LT(t.cond_indep_loss, 1e-6);
    EXPECT_NEAR(r.best().diagnostics.objective, eigen_optimum(Matrix::Identity(3, 3), 2, 1.0), 1e-8);
}

TEST(Solver, FrozenDecoderKeepsDecoder) {
    const GroundTruthModel model = testkit::random_model(5, 2, 4);
    SolverConfig c = quick(0.7, 2);
    c.freeze_decoder = true;
    const SolveResult r = solve_stationary(model, c);
    ASSERT_TRUE(r.converged);
    const Matrix d = frozen_decoder(5, 2, c);
    for (const auto& o : r.restarts) {
        EXPECT_EQ(o.params.dec.d, d);
        EXPECT_EQ(o.params.dec.b_d, Vector::Zero(5));
    }
    const EncoderParams opt = optimal_encoder(d, 0.7);
    EXPECT_LT((r.best().params.enc.w_mu - opt.w_mu).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((r.best().params.enc.b_sigma - opt.b_sigma).cwiseAbs().maxCoeff(), 1e-6);
    // The frozen decoder does not depend on beta.
    c.beta = 3.0;
    EXPECT_EQ(frozen_decoder(5, 2, c), d);
}

TEST(SelectBest, PrefersConvergedAndLowestIndexOnTies) {
    std::vector<RestartOutcome> r(3);
    r[0].diagnostics.objective = 5.0;
    r[0].diagnostics.converged = false;
    r[1].diagnostics.objective = 1.0;
    r[1].diagnostics.converged = true;
    r[2].diagnostics.objective = 1.0 + 1e-12;
    r[2].diagnostics.converged = true;
    EXPECT_EQ(select_best(r), 1u);
    r[2].diagnostics.objective = 2.0;
    EXPECT_EQ(select_best(r), 2u);
    for (auto& o : r) o.diagnostics.converged = false;
    EXPECT_EQ(select_best(r), 0u);
    EXPECT_THROW(select_best({}), std::invalid_argument);
}
