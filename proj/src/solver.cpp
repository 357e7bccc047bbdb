#include "bvae/solver.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "bvae/rng.hpp"

namespace bvae {

namespace {

constexpr std::uint64_t kFrozenDecoderStream = 0xDEC0DE;

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
    throw std::invalid_argument("solver." + field + ": " + why);
}

Matrix normal_matrix(Index rows, Index cols, double scale, std::uint64_t seed, std::uint64_t stream) {
    const CounterStream rng(seed, stream);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) {
            m(i, j) = scale * rng.normal(static_cast<std::uint64_t>(j * rows + i));
        }
    }
    return m;
}

}  // namespace

void SolverConfig::validate() const {
    if (!(beta >= kMinBeta) || !std::isfinite(beta)) {
        bad_field("beta", "must be a finite value >= " + std::to_string(kMinBeta) +
                              " (minimum accepted beta is 1e-3)");
    }
    if (max_iters < 1) bad_field("max_iters", "must be >= 1");
    if (!(grad_tol > 0.0)) bad_field("grad_tol", "must be > 0");
    if (n_restarts < 1) bad_field("n_restarts", "must be >= 1");
    if (!(init_scale > 0.0)) bad_field("init_scale", "must be > 0");
    if (!(step_rule.adam_learning_rate > 0.0)) bad_field("step_rule.adam_learning_rate", "must be > 0");
    if (step_rule.adam_iters < 0) bad_field("step_rule.adam_iters", "must be >= 0");
    if (!(step_rule.adam_decay > 0.0)) bad_field("step_rule.adam_decay", "must be > 0");
    if (step_rule.lbfgs_memory < 1) bad_field("step_rule.lbfgs_memory", "must be >= 1");
    if (!(frozen_decoder_scale >= 0.0)) bad_field("frozen_decoder_scale", "must be >= 0");
}

AscentSettings SolverConfig::ascent_settings() const {
    AscentSettings s;
    s.adam_learning_rate = step_rule.adam_learning_rate;
    s.adam_iters = step_rule.adam_iters;
    s.adam_decay = step_rule.adam_decay;
    s.lbfgs_memory = step_rule.lbfgs_memory;
    s.max_iters = max_iters;
    s.grad_tol = grad_tol;
    s.record_trajectory = record_trajectory;
    return s;
}

std::uint64_t restart_seed(const SolverConfig& config, Index restart) {
    return derive_seed(config.seed, static_cast<std::uint64_t>(restart));
}

Matrix frozen_decoder(Index n, Index k, const SolverConfig& config) {
    return normal_matrix(n, k, config.frozen_decoder_scale, config.frozen_decoder_seed,
                         kFrozenDecoderStream);
}

LinearParams initial_params(Index n, Index k, const SolverConfig& config, Index restart) {
    const std::uint64_t seed = restart_seed(config, restart);
    LinearParams p = LinearParams::unflatten(
        normal_matrix(LinearParams::flat_size(n, k), 1, config.init_scale, seed, 0).col(0), n, k);
    if (config.freeze_decoder) {
        p.dec.d = frozen_decoder(n, k, config);
        p.dec.b_d.setZero();
    }
    return p;
}

RestartOutcome optimize_from(const LinearParams& init, const Matrix& sigma_x, const SolverConfig& config) {
    config.validate();
    const Index n = init.data_dim();
    const Index k = init.latent_dim();
    const Index decoder_offset = 2 * k * n + 2 * k;
    const double beta = config.beta;
    const bool frozen = config.freeze_decoder;

    const AscentObjective objective = [&](const Vector& x, Vector& grad, bool& flag) {
        const LinearParams p = LinearParams::unflatten(x, n, k);
        const Evaluation ev = evaluate(p.enc, p.dec, sigma_x, beta);
        grad = ev.gradient.flatten();
        if (frozen) {
            grad.tail(grad.size() - decoder_offset).setZero();
        }
        flag = ev.clamped;
        return ev.value;
    };

    const AscentResult run = maximize(objective, init.flatten(), config.ascent_settings());

    RestartOutcome out;
    out.params = LinearParams::unflatten(run.x, n, k);
    out.trajectory = run.trajectory;
    auto& diag = out.diagnostics;
    diag.objective = run.value;
    diag.grad_norm = run.grad_max;
    diag.clamped = run.flag;
    diag.iterations = run.iterations;
    diag.residual = stationarity_residual(out.params.enc, out.params.dec, sigma_x, beta);
    diag.residual_max = frozen ? diag.residual.encoder_max() : diag.residual.max();
    diag.converged = std::isfinite(run.value) && run.grad_max <= config.grad_tol && !run.flag;
    return out;
}

std::size_t select_best(const std::vector<RestartOutcome>& restarts) {
    if (restarts.empty()) {
        throw std::invalid_argument("select_best: no restarts");
    }
    bool any_converged = false;
    for (const auto& r : restarts) {
        any_converged = any_converged || r.diagnostics.converged;
    }
    std::size_t best = restarts.size();
    for (std::size_t i = 0; i < restarts.size(); ++i) {
        const auto& d = restarts[i].diagnostics;
        if (any_converged && !d.converged) {
            continue;
        }
        if (best == restarts.size()) {
            best = i;
            continue;
        }
        const double incumbent = restarts[best].diagnostics.objective;
        const double tie = 1e-10 * (1.0 + std::abs(incumbent));
        if (d.objective > incumbent + tie) {
            best = i;
        }
    }
    return best;
}

SolveResult solve_stationary(const GroundTruthModel& model, const SolverConfig& config) {
    config.validate();
    const Matrix sigma_x = data_covariance(model);
    const Index n = model.data_dim();
    const Index k = model.latent_dim();

    SolveResult result;
    for (Index r = 0; r < config.n_restarts; ++r) {
        RestartOutcome outcome = optimize_from(initial_params(n, k, config, r), sigma_x, config);
        outcome.restart = r;
        outcome.seed = restart_seed(config, r);
        result.restarts.push_back(std::move(outcome));
    }
    result.best_index = select_best(result.restarts);
    result.converged = result.best().diagnostics.converged;
    return result;
}

ReducedSolution solve_reduced(const GroundTruthModel& model, const SolverConfig& config) {
    config.validate();
    const Matrix sigma_x = data_covariance(model);
    const Index n = model.data_dim();
    const Index k = model.latent_dim();
    const double beta = config.beta;

    auto finish = [&](Matrix d, double grad_norm, bool converged) {
        ReducedSolution s;
        s.params = LinearParams::zeros(n, k);
        s.params.enc = optimal_encoder(d, beta);
        s.params.dec.d = d;
        s.objective = reduced_objective(d, sigma_x, beta);
        s.d = std::move(d);
        s.grad_norm = grad_norm;
        s.converged = converged;
        return s;
    };

    if (config.freeze_decoder) {
        return finish(frozen_decoder(n, k, config), 0.0, true);
    }

    const AscentObjective objective = [&](const Vector& x, Vector& grad, bool& flag) {
        const Matrix d = x.reshaped(n, k);
        grad = reduced_gradient(d, sigma_x, beta).reshaped();
        flag = false;
        return reduced_objective(d, sigma_x, beta);
    };

    ReducedSolution best;
    bool have_best = false;
    for (Index r = 0; r < config.n_restarts; ++r) {
        const Vector start = initial_params(n, k, config, r).dec.d.reshaped();
        const AscentResult run = maximize(objective, start, config.ascent_settings());
        ReducedSolution candidate =
            finish(run.x.reshaped(n, k), run.grad_max, run.grad_max <= config.grad_tol);
        const bool better = !have_best || (candidate.converged && !best.converged) ||
                            (candidate.converged == best.converged &&
                             candidate.objective > best.objective + 1e-10 * (1.0 + std::abs(best.objective)));
        if (better) {
            best = std::move(candidate);
            have_best = true;
        }
    }
    return best;
}

}  // namespace bvae
