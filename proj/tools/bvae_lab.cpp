#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bvae/config.hpp"
#include "bvae/metrics.hpp"
#include "bvae/neural.hpp"
#include "bvae/neural_sweep.hpp"
#include "bvae/rng.hpp"
#include "bvae/solver.hpp"
#include "bvae/sweep.hpp"
#include "oracle.hpp"

namespace fs = std::filesystem;
using namespace bvae;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

// Thrown for bad command-line input; reported as a one-line reason with exit 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Index workers_or_default(Index flag) {
    return flag > 0 ? flag : default_workers();
}

void print_check(const char* name, const CheckOutcome& c) {
    std::printf("%-28s %s  %s\n", name, !c.applicable ? "N/A " : (c.pass ? "PASS" : "FAIL"), c.detail.c_str());
}

void print_report(const PropositionReport& r) {
    print_check("prop1_pass", r.prop1);
    print_check("prop2_kl_pass", r.prop2_kl);
    print_check("prop2_recon_pass", r.prop2_recon);
    print_check("prop3_pass", r.prop3);
    print_check("tie_interior_min", r.tie_interior_min);
    print_check("fixed_decoder_mie_min_at_1", r.fixed_decoder_mie_min_at_1);
}

int cmd_sweep(const std::string& config_path, const std::string& out, Index workers) {
    const LabConfig config = load_config(config_path);
    const SweepResult result = run_sweep(config, workers_or_default(workers));
    PropositionReport report;
    std::string skipped;
    try {
        report = check_propositions(result.best, result.freeze_decoder);
    } catch (const std::invalid_argument& e) {
        skipped = e.what();
    }
    write_sweep_outputs(out, config, result, report);
    std::size_t converged = 0;
    for (const auto& r : result.records) converged += r.converged ? 1 : 0;
    std::printf("sweep: %zu betas x %lld restarts, %zu/%zu converged -> %s\n", result.betas.size(),
                static_cast<long long>(config.solver.n_restarts), converged, result.records.size(), out.c_str());
    if (!skipped.empty()) {
        std::printf("propositions not checked: %s\n", skipped.c_str());
    } else {
        print_report(report);
    }
    return 0;
}

int cmd_solve(const std::string& config_path, double beta, bool reduced) {
    if (!(beta >= kMinBeta)) {
        throw UsageError("solve: --beta must be >= 1e-3 (minimum accepted beta)");
    }
    const LabConfig config = load_config(config_path);
    SolverConfig cfg = config.solver;
    cfg.beta = beta;
    const GroundTruthModel model = make_model(config.model).model;
    const Matrix sigma_x = data_covariance(model);

    if (reduced) {
        const ReducedSolution s = solve_reduced(model, cfg);
        std::printf("beta                %s\nobjective_paper     %s\ngrad_norm           %s\nconverged           %s\n",
                    format_double(beta).c_str(), format_double(s.objective).c_str(),
                    format_double(s.grad_norm).c_str(), s.converged ? "true" : "false");
        return s.converged ? 0 : kExitFail;
    }
    const SolveResult res = solve_stationary(model, cfg);
    const RestartOutcome& best = res.best();
    const SweepRecord rec = make_record(beta, best, model, sigma_x);
    const auto& d = best.diagnostics;
    std::printf("beta                %s\n", format_double(beta).c_str());
    std::printf("best_restart        %lld (seed %llu)\n", static_cast<long long>(best.restart),
                static_cast<unsigned long long>(best.seed));
    std::printf("objective_paper     %s\n", format_double(d.objective).c_str());
    std::printf("grad_norm           %s\n", format_double(d.grad_norm).c_str());
    std::printf("residual.mean_map   %s\n", format_double(d.residual.mean_map).c_str());
    std::printf("residual.decoder    %s\n", format_double(d.residual.decoder).c_str());
    std::printf("residual.var_weight %s\n", format_double(d.residual.var_weight).c_str());
    std::printf("residual.var_bias   %s\n", format_double(d.residual.var_bias).c_str());
    std::printf("clamped             %s\n", d.clamped ? "true" : "false");
    std::printf("iterations          %lld\n", static_cast<long long>(d.iterations));
    std::printf("elbo                %s\n", format_double(rec.elbo).c_str());
    std::printf("reconstruction      %s\n", format_double(rec.reconstruction).c_str());
    std::printf("cond_indep_loss     %s\n", format_double(rec.cond_indep_loss).c_str());
    std::printf("data_log_likelihood %s\n", format_double(rec.data_log_likelihood).c_str());
    std::printf("mie                 %s\n", format_double(rec.mie).c_str());
    std::printf("tie                 %s\n", format_double(rec.tie).c_str());
    std::printf("converged           %s\n", res.converged ? "true" : "false");
    return res.converged ? 0 : kExitFail;
}

int cmd_check(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw UsageError("check: results directory not found: " + dir);
    }
    const PropositionReport report = check_results_dir(dir);
    print_report(report);
    return report.all_pass() ? 0 : kExitFail;
}

LinearParams random_params(Index n, Index k, std::uint64_t seed) {
    const CounterStream rng(seed, 0);
    Vector flat(LinearParams::flat_size(n, k));
    for (Index i = 0; i < flat.size(); ++i) flat(i) = 0.5 * rng.normal(static_cast<std::uint64_t>(i));
    return LinearParams::unflatten(flat, n, k);
}

Matrix random_mixing(Index n, Index k, std::uint64_t seed) {
    const CounterStream rng(seed, 1);
    Matrix a(n, k);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal(static_cast<std::uint64_t>(i));
    return a;
}

int cmd_grad_check(Index instances) {
    if (instances < 1) {
        throw UsageError("grad-check: --n must be >= 1");
    }
    constexpr double kH = 1e-5;
    constexpr double kLinearTol = 1e-5;
    constexpr double kNeuralTol = 1e-4;
    bool ok = true;

    for (const auto& [n, k] : {std::pair<Index, Index>{4, 2}, {6, 3}}) {
        double worst = 0.0;
        for (Index t = 0; t < instances; ++t) {
            const auto seed = derive_seed(0x6C, n, k, t);
            const LinearParams p = random_params(n, k, seed);
            const Matrix sigma_x = data_covariance(GroundTruthModel(random_mixing(n, k, seed)));
            const double beta = 0.5 + static_cast<double>(t % 4);
            const auto f = [&](const Vector& x) {
                const LinearParams q = LinearParams::unflatten(x, n, k);
                return objective_paper(q.enc, q.dec, sigma_x, beta);
            };
            const Vector fd = oracle::fd_gradient(f, p.flatten(), kH);
            const Vector an = gradient(p.enc, p.dec, sigma_x, beta).flatten();
            worst = std::max(worst, oracle::relative_error(an, fd));
        }
        const bool pass = worst < kLinearTol;
        ok = ok && pass;
        std::printf("%s linear N=%lld k=%lld instances=%lld max_rel_err=%.3e\n", pass ? "PASS" : "FAIL",
                    static_cast<long long>(n), static_cast<long long>(k), static_cast<long long>(instances), worst);
    }

    MlpSpec spec;
    spec.encoder_hidden = {8, 8};
    spec.decoder_hidden = {8, 8};
    spec.data_dim = 6;
    spec.latent_dim = 2;
    const NeuralVae net(spec, 11);
    const CounterStream rng(12, 0);
    Matrix x(6, 4);
    Matrix eps(2, 4);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal(static_cast<std::uint64_t>(i));
    for (Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal(static_cast<std::uint64_t>(100 + i));
    std::vector<DenseLayer> grad;
    net.evaluate(x, eps, 2.0, &grad);
    NeuralVae probe = net;
    const auto f = [&](const Vector& v) {
        probe.assign(v);
        return probe.evaluate(x, eps, 2.0).objective;
    };
    const double err = oracle::relative_error(flatten_layers(grad), oracle::fd_gradient(f, net.flatten(), kH));
    const bool pass = err < kNeuralTol;
    ok = ok && pass;
    std::printf("%s neural widths=8,8 N=6 k=2 batch=4 max_rel_err=%.3e\n", pass ? "PASS" : "FAIL", err);
    return ok ? 0 : kExitFail;
}

int cmd_train_neural(const std::string& config_path, const std::string& out, Index workers) {
    const LabConfig config = load_config(config_path);
    if (!config.neural) {
        throw ConfigError("neural", "section required for train-neural");
    }
    const NeuralSweepResult result = run_neural_sweep(config, workers_or_default(workers));
    write_neural_outputs(out, config, result);
    std::printf("%-8s %-6s %-14s %-14s %-14s\n", "beta", "runs", "mean_kl", "mean_elbo", "mean_tie");
    for (const auto& s : result.summary) {
        std::printf("%-8.4g %-6lld %-14.6g %-14.6g %-14.6g\n", s.beta, static_cast<long long>(s.runs),
                    s.cond_indep_loss[0], s.elbo[0], s.tie[0]);
    }
    std::printf("kl_non_increasing   %s\ntie_interior_min    %s  (%s)\n",
                result.report.kl_non_increasing ? "PASS" : "FAIL", result.report.tie_interior_min ? "PASS" : "FAIL",
                result.report.detail.c_str());
    return 0;
}

std::vector<double> parse_list(const std::string& s, const char* flag) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(std::string(flag) + ": bad number '" + item + "'");
        }
    }
    return out;
}

int cmd_traverse(const std::string& model_path, const std::string& out, const std::string& base, double lo,
                 double hi, Index steps, Index scale) {
    if (!fs::exists(model_path)) {
        throw UsageError("traverse: model file not found: " + model_path);
    }
    if (steps < 1) {
        throw UsageError("traverse: --steps must be >= 1");
    }
    const NeuralVae net = load_network(model_path);
    const Index n = net.spec().data_dim;
    Vector base_x = Vector::Zero(n);
    if (!base.empty()) {
        const auto v = parse_list(base, "--base");
        if (static_cast<Index>(v.size()) != n) {
            throw UsageError("traverse: --base needs " + std::to_string(n) + " values");
        }
        base_x = Eigen::Map<const Vector>(v.data(), n);
    }
    std::vector<double> values;
    for (Index i = 0; i < steps; ++i) {
        values.push_back(steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1));
    }
    const auto side = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(n))));
    const Index height = side * side == n ? side : 1;
    const Index width = n / height;
    if (scale <= 0) {
        scale = height > 1 ? 4 : 16;
    }

    fs::create_directories(out);
    for (Index u = 0; u < net.spec().latent_dim; ++u) {
        const Matrix grid = latent_traversal(net, base_x, u, values);
        const std::string stem = "unit_" + std::to_string(u);
        write_pgm_grid((fs::path(out) / (stem + ".pgm")).string(), grid, height, width, scale);
        std::ofstream csv(fs::path(out) / (stem + ".csv"));
        csv << "value";
        for (Index j = 0; j < n; ++j) csv << ",x" << j;
        csv << '\n';
        for (std::size_t i = 0; i < values.size(); ++i) {
            csv << format_double(values[i]);
            for (Index j = 0; j < n; ++j) csv << ',' << format_double(grid(static_cast<Index>(i), j));
            csv << '\n';
        }
    }
    std::printf("traverse: %lld grids of %lld steps -> %s\n", static_cast<long long>(net.spec().latent_dim),
                static_cast<long long>(steps), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear and neural beta-VAE laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, results_dir, model_path, base;
    double beta = 1.0;
    double lo = -3.0;
    double hi = 3.0;
    Index workers = 0;
    Index instances = 20;
    Index steps = 9;
    Index scale = 0;
    bool reduced = false;

    auto* sweep = app.add_subcommand("sweep", "Run a beta sweep of the linear model");
    sweep->add_option("--config", config_path, "JSON config")->required();
    sweep->add_option("--out", out_dir, "Output directory")->required();
    sweep->add_option("--workers", workers, "Worker threads (default: BVAE_WORKERS or all cores)");

    auto* solve = app.add_subcommand("solve", "Solve the linear model at one beta");
    solve->add_option("--config", config_path, "JSON config")->required();
    solve->add_option("--beta", beta, "Beta (>= 1e-3)");
    solve->add_flag("--reduced", reduced, "Use the decoder-only reduced solver");

    auto* check = app.add_subcommand("check", "Check the propositions on sweep results");
    check->add_option("--results", results_dir, "Sweep output directory")->required();

    auto* grad = app.add_subcommand("grad-check", "Finite-difference check of the analytic gradients");
    grad->add_option("--n", instances, "Random instances per shape");

    auto* neural = app.add_subcommand("train-neural", "Train neural beta-VAEs over betas and seeds");
    neural->add_option("--config", config_path, "JSON config with a neural section")->required();
    neural->add_option("--out", out_dir, "Output directory")->required();
    neural->add_option("--workers", workers, "Worker threads (default: BVAE_WORKERS or all cores)");

    auto* trav = app.add_subcommand("traverse", "Write latent traversal grids for a saved network");
    trav->add_option("--model", model_path, "Saved network JSON")->required();
    trav->add_option("--out", out_dir, "Output directory")->required();
    trav->add_option("--base", base, "Comma-separated base input (default: zeros)");
    trav->add_option("--min", lo, "Lowest latent value");
    trav->add_option("--max", hi, "Highest latent value");
    trav->add_option("--steps", steps, "Traversal steps");
    trav->add_option("--scale", scale, "Pixel scale (default: 4 for square images, 16 otherwise)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }

    try {
        if (*sweep) return cmd_sweep(config_path, out_dir, workers);
        if (*solve) return cmd_solve(config_path, beta, reduced);
        if (*check) return cmd_check(results_dir);
        if (*grad) return cmd_grad_check(instances);
        if (*neural) return cmd_train_neural(config_path, out_dir, workers);
        if (*trav) return cmd_traverse(model_path, out_dir, base, lo, hi, steps, scale);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: config field %s\n", e.what());
        return kExitUsage;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFail;
    }
    return kExitUsage;
}
