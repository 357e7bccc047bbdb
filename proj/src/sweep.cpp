#include "bvae/sweep.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "json.hpp"

namespace bvae {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool near_zero(const Vector& v) {
    return v.size() == 0 || v.cwiseAbs().maxCoeff() <= kBiasTolerance;
}

}  // namespace

void parallel_for(Index count, Index workers, const std::function<void(Index)>& task) {
    const Index n_threads = std::max<Index>(1, std::min(workers, count));
    std::atomic<Index> next{0};
    std::mutex error_mutex;
    Index error_index = count;
    std::exception_ptr error;

    auto run = [&] {
        for (Index i = next++; i < count; i = next++) {
            try {
                task(i);
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };
    if (n_threads == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        for (Index t = 0; t < n_threads; ++t) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

SweepRecord make_record(double beta, const RestartOutcome& outcome, const GroundTruthModel& model,
                        const Matrix& sigma_x) {
    const auto& p = outcome.params;
    const auto& d = outcome.diagnostics;
    SweepRecord r;
    r.beta = beta;
    r.restart = outcome.restart;
    r.seed = outcome.seed;
    r.objective_paper = d.objective;
    const ElboTerms terms = elbo_terms(p.enc, p.dec, sigma_x);
    r.elbo = terms.elbo;
    r.reconstruction = terms.reconstruction;
    r.cond_indep_loss = terms.cond_indep_loss;
    const bool decoder_ok = near_zero(p.dec.b_d);
    const bool encoder_ok = near_zero(p.enc.b_mu);
    r.data_log_likelihood = decoder_ok ? data_log_likelihood(p.dec, sigma_x) : kNaN;
    r.mie = decoder_ok && encoder_ok ? inference_error(p.enc, model_posterior(p.dec), sigma_x) : kNaN;
    r.tie = encoder_ok ? aligned_inference_error(p.enc, ground_truth_posterior(model), sigma_x) : kNaN;
    r.grad_norm = d.grad_norm;
    r.residual_max = d.residual_max;
    r.converged = d.converged;
    return r;
}

SweepResult run_sweep(const LabConfig& config, Index workers) {
    const GroundTruthModel model = make_model(config.model).model;
    const Matrix sigma_x = data_covariance(model);
    const Index n = model.data_dim();
    const Index k = model.latent_dim();
    const Index restarts = config.solver.n_restarts;

    SweepResult result;
    result.betas = config.sweep.betas;
    result.freeze_decoder = config.solver.freeze_decoder;
    const auto n_beta = static_cast<Index>(result.betas.size());

    std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(n_beta * restarts));
    std::vector<SweepRecord> records(outcomes.size());
    parallel_for(n_beta * restarts, workers, [&](Index task) {
        const Index b = task / restarts;
        const Index r = task % restarts;
        SolverConfig cfg = config.solver;
        cfg.beta = result.betas[static_cast<std::size_t>(b)];
        RestartOutcome o = optimize_from(initial_params(n, k, cfg, r), sigma_x, cfg);
        o.restart = r;
        o.seed = restart_seed(cfg, r);
        records[static_cast<std::size_t>(task)] = make_record(cfg.beta, o, model, sigma_x);
        outcomes[static_cast<std::size_t>(task)] = std::move(o);
    });

    result.records = records;
    for (Index b = 0; b < n_beta; ++b) {
        const auto first = outcomes.begin() + b * restarts;
        const std::vector<RestartOutcome> group(first, first + restarts);
        const std::size_t best = select_best(group);
        result.best.push_back(records[static_cast<std::size_t>(b * restarts) + best]);
        result.best_outcomes.push_back(group[best]);
    }
    return result;
}

const std::vector<std::string>& envelope_columns() {
    static const std::vector<std::string> cols{"objective_paper", "elbo", "reconstruction", "cond_indep_loss",
                                               "data_log_likelihood", "mie", "tie"};
    return cols;
}

std::vector<Envelope> envelopes(const std::vector<SweepRecord>& records) {
    auto values = [](const SweepRecord& r) {
        return std::vector<double>{r.objective_paper, r.elbo, r.reconstruction, r.cond_indep_loss,
                                   r.data_log_likelihood, r.mie, r.tie};
    };
    std::vector<Envelope> out;
    for (const auto& r : records) {
        if (out.empty() || out.back().beta != r.beta) {
            Envelope e{r.beta, {}};
            for (const double v : values(r)) e.ranges.emplace_back(v, v);
            out.push_back(std::move(e));
            continue;
        }
        const auto v = values(r);
        for (std::size_t i = 0; i < v.size(); ++i) {
            auto& [lo, hi] = out.back().ranges[i];
            lo = std::fmin(lo, v[i]);
            hi = std::fmax(hi, v[i]);
        }
    }
    return out;
}

void write_sweep_outputs(const std::string& dir, const LabConfig& config, const SweepResult& result,
                         const PropositionReport& report) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_records((fs::path(dir) / "records.csv").string(), result.records);
    write_records((fs::path(dir) / "best.csv").string(), result.best);

    nlohmann::json manifest;
    manifest["tool"] = "bvae_lab";
    manifest["version"] = BVAE_VERSION;
    manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                "." + std::to_string(EIGEN_MINOR_VERSION);
    manifest["config_hash"] = config_hash(config);
    manifest["config"] = nlohmann::json::parse(config_to_json(config));
    manifest["freeze_decoder"] = result.freeze_decoder;
    manifest["betas"] = result.betas;
    std::vector<std::uint64_t> seeds;
    for (Index r = 0; r < config.solver.n_restarts; ++r) seeds.push_back(restart_seed(config.solver, r));
    manifest["restart_seeds"] = seeds;
    if (std::holds_alternative<MnistMixing>(config.model)) {
        manifest["mnist_indices"] = *make_model(config.model).mnist_indices;
    }
    std::ofstream(fs::path(dir) / "manifest.json") << manifest.dump(2) << '\n';
    std::ofstream(fs::path(dir) / "report.json") << report_to_json(report, envelopes(result.records)) << '\n';
}

PropositionReport check_results_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) {
        throw std::runtime_error("cannot read " + manifest_path.string());
    }
    bool frozen = false;
    try {
        frozen = nlohmann::json::parse(in).at("freeze_decoder").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(manifest_path.string() + ": " + e.what());
    }
    return check_propositions(read_records((fs::path(dir) / "best.csv").string()), frozen);
}

}  // namespace bvae
