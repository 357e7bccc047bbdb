#pragma once

#include <cstdint>
#include <vector>

#include "bvae/ascent.hpp"
#include "bvae/generative.hpp"
#include "bvae/linear_bvae.hpp"

namespace bvae {

/// Smallest accepted beta; the b_sigma stationarity condition has no finite
/// solution at beta = 0.
inline constexpr double kMinBeta = 1e-3;

struct StepRule {
    double adam_learning_rate = 0.02;
    Index adam_iters = 2000;
    double adam_decay = 500.0;
    Index lbfgs_memory = 12;
};

struct SolverConfig {
    double beta = 1.0;
    Index max_iters = 50000;
    double grad_tol = 1e-8;
    Index n_restarts = 8;
    double init_scale = 0.1;
    StepRule step_rule;
    bool freeze_decoder = false;
    std::uint64_t seed = 0;
    // Decoder held fixed when freeze_decoder is set: D_ij ~ N(0, scale^2) drawn
    // from this seed, b_D = 0. Shared by every restart and every beta.
    std::uint64_t frozen_decoder_seed = 1;
    double frozen_decoder_scale = 1.0;
    bool record_trajectory = false;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    AscentSettings ascent_settings() const;
};

struct SolveDiagnostics {
    double objective = 0.0;  // objective_paper
    double grad_norm = 0.0;  // max-abs over the optimized blocks
    StationarityResidual residual;
    double residual_max = 0.0;  // over the lines of the optimized blocks
    bool clamped = false;
    bool converged = false;
    Index iterations = 0;
};

struct RestartOutcome {
    Index restart = 0;
    std::uint64_t seed = 0;
    LinearParams params;
    SolveDiagnostics diagnostics;
    std::vector<double> trajectory;
};

/// All restart outcomes plus the selected one. When no restart converged,
/// `converged` is false and `best()` is the highest-objective attempt.
struct SolveResult {
    std::vector<RestartOutcome> restarts;
    std::size_t best_index = 0;
    bool converged = false;

    const RestartOutcome& best() const { return restarts.at(best_index); }
};

std::uint64_t restart_seed(const SolverConfig& config, Index restart);

/// Random starting point for one restart (entries N(0, init_scale^2)); the decoder
/// is replaced by the frozen one when freeze_decoder is set.
LinearParams initial_params(Index n, Index k, const SolverConfig& config, Index restart);

Matrix frozen_decoder(Index n, Index k, const SolverConfig& config);

/// Runs the optimizer from `init` at config.beta.
RestartOutcome optimize_from(const LinearParams& init, const Matrix& sigma_x, const SolverConfig& config);

/// Picks the highest objective among converged restarts; ties (relative 1e-10)
/// go to the lowest restart index.
std::size_t select_best(const std::vector<RestartOutcome>& restarts);

SolveResult solve_stationary(const GroundTruthModel& model, const SolverConfig& config);

/// Cross-check solver: the encoder is eliminated analytically and only D is optimized.
struct ReducedSolution {
    Matrix d;
    LinearParams params;  // D with its optimal encoder and zero biases
    double objective = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
};

ReducedSolution solve_reduced(const GroundTruthModel& model, const SolverConfig& config);

}  // namespace bvae
