#include "bvae/neural_sweep.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "bvae/csv.hpp"
#include "bvae/rng.hpp"
#include "bvae/sweep.hpp"

namespace bvae {

namespace {

constexpr std::uint64_t kDataTag = 0xDA7A;
constexpr std::uint64_t kEvalTag = 0xE7A1;
constexpr std::uint64_t kTieTag = 0x71E;

std::array<double, 3> stats(const std::vector<double>& v) {
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const double x : v) {
        sum += x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return {sum / static_cast<double>(v.size()), lo, hi};
}

}  // namespace

std::uint64_t neural_run_seed(const NeuralSettings& settings, Index seed_index) {
    return derive_seed(settings.seed, static_cast<std::uint64_t>(seed_index));
}

MlpSpec mlp_spec(const NeuralSettings& settings, const GroundTruthModel& model) {
    MlpSpec spec;
    spec.encoder_hidden = settings.encoder_hidden;
    spec.decoder_hidden = settings.decoder_hidden;
    spec.activation = settings.activation;
    spec.latent_dim = model.latent_dim();
    spec.data_dim = model.data_dim();
    return spec;
}

NeuralSweepResult run_neural_sweep(const LabConfig& config, Index workers, bool keep_networks) {
    if (!config.neural) {
        throw ConfigError("neural", "section required for neural training");
    }
    const NeuralSettings& ns = *config.neural;
    const GroundTruthModel model = make_model(config.model).model;
    const MlpSpec spec = mlp_spec(ns, model);
    const auto n_beta = static_cast<Index>(ns.betas.size());
    const Index n_tasks = n_beta * ns.n_seeds;
    keep_networks = keep_networks || ns.save_models;

    NeuralSweepResult result;
    result.records.resize(static_cast<std::size_t>(n_tasks));
    result.logs.resize(static_cast<std::size_t>(n_tasks));
    std::vector<std::optional<NeuralVae>> nets(static_cast<std::size_t>(n_tasks));

    parallel_for(n_tasks, workers, [&](Index task) {
        const Index b = task / ns.n_seeds;
        const Index s = task % ns.n_seeds;
        const std::uint64_t seed = neural_run_seed(ns, s);
        TrainConfig cfg = ns.train;
        cfg.beta = ns.betas[static_cast<std::size_t>(b)];
        cfg.seed = seed;

        const Matrix x = sample_data(model, cfg.n_examples, derive_seed(seed, kDataTag)).x;
        TrainResult trained = train(spec, cfg, x);

        // Final evaluation over the whole dataset with fresh reparametrization noise.
        const CounterStream noise(derive_seed(seed, kEvalTag), 0);
        Matrix eps(spec.latent_dim, cfg.n_examples);
        for (Index j = 0; j < eps.cols(); ++j) {
            for (Index i = 0; i < eps.rows(); ++i) {
                eps(i, j) = noise.normal(static_cast<std::uint64_t>(j * eps.rows() + i));
            }
        }
        const BatchTerms t = trained.network.evaluate(x.transpose(), eps, cfg.beta);
        const TieEstimate tie =
            estimate_tie(trained.network, model, ns.tie_samples, derive_seed(seed, kTieTag), ns.align_tie);

        auto& r = result.records[static_cast<std::size_t>(task)];
        r.beta = cfg.beta;
        r.seed_index = s;
        r.seed = seed;
        r.reconstruction = t.reconstruction;
        r.cond_indep_loss = t.kl;
        r.elbo = t.elbo;
        r.objective = t.objective;
        r.tie = tie.mean;
        r.tie_std_error = tie.std_error;
        result.logs[static_cast<std::size_t>(task)] = std::move(trained.log);
        if (keep_networks) {
            nets[static_cast<std::size_t>(task)] = std::move(trained.network);
        }
    });

    if (keep_networks) {
        for (auto& n : nets) result.networks.push_back(std::move(*n));
    }
    result.summary = summarize(result.records);
    result.report = check_neural(result.summary);
    return result;
}

std::vector<NeuralSummary> summarize(const std::vector<NeuralRecord>& records) {
    std::vector<NeuralRecord> sorted = records;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const NeuralRecord& a, const NeuralRecord& b) { return a.beta < b.beta; });
    std::vector<NeuralSummary> out;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        std::vector<double> kl, recon, elbo, tie;
        while (j < sorted.size() && sorted[j].beta == sorted[i].beta) {
            kl.push_back(sorted[j].cond_indep_loss);
            recon.push_back(sorted[j].reconstruction);
            elbo.push_back(sorted[j].elbo);
            tie.push_back(sorted[j].tie);
            ++j;
        }
        out.push_back({sorted[i].beta, static_cast<Index>(j - i), stats(kl), stats(recon), stats(elbo), stats(tie)});
        i = j;
    }
    return out;
}

NeuralReport check_neural(const std::vector<NeuralSummary>& summary, double slack) {
    NeuralReport rep;
    if (summary.size() < 3) {
        rep.detail = "need at least 3 beta values";
        return rep;
    }
    rep.kl_non_increasing = true;
    for (std::size_t i = 1; i < summary.size(); ++i) {
        if (!(summary[i].cond_indep_loss[0] <= summary[i - 1].cond_indep_loss[0] + slack)) {
            rep.kl_non_increasing = false;
            rep.detail += "mean cond_indep_loss rises between beta=" + format_double(summary[i - 1].beta) +
                          " and beta=" + format_double(summary[i].beta) + "; ";
            break;
        }
    }
    std::size_t arg = 0;
    for (std::size_t i = 1; i < summary.size(); ++i) {
        if (summary[i].tie[0] < summary[arg].tie[0]) arg = i;
    }
    rep.tie_argmin_beta = summary[arg].beta;
    rep.tie_interior_min = std::isfinite(summary[arg].tie[0]) && arg > 0 && arg + 1 < summary.size();
    rep.detail += "mean tie argmin at beta=" + format_double(rep.tie_argmin_beta);
    return rep;
}

void write_neural_outputs(const std::string& dir, const LabConfig& config, const NeuralSweepResult& result) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    CsvTable records{{"beta", "seed_index", "seed", "reconstruction", "cond_indep_loss", "elbo", "objective", "tie",
                      "tie_std_error"},
                     {}};
    for (const auto& r : result.records) {
        records.rows.push_back({format_double(r.beta), std::to_string(r.seed_index), std::to_string(r.seed),
                                format_double(r.reconstruction), format_double(r.cond_indep_loss),
                                format_double(r.elbo), format_double(r.objective), format_double(r.tie),
                                format_double(r.tie_std_error)});
    }
    write_table((fs::path(dir) / "neural_records.csv").string(), records);

    CsvTable summary{{"beta", "runs"}, {}};
    for (const char* col : {"cond_indep_loss", "reconstruction", "elbo", "tie"}) {
        for (const char* stat : {"mean", "min", "max"}) {
            summary.header.push_back(std::string(col) + "_" + stat);
        }
    }
    for (const auto& s : result.summary) {
        std::vector<std::string> row{format_double(s.beta), std::to_string(s.runs)};
        for (const auto* a : {&s.cond_indep_loss, &s.reconstruction, &s.elbo, &s.tie}) {
            for (const double v : *a) row.push_back(format_double(v));
        }
        summary.rows.push_back(std::move(row));
    }
    write_table((fs::path(dir) / "neural_summary.csv").string(), summary);

    const NeuralSettings& ns = *config.neural;
    if (ns.write_epoch_log) {
        CsvTable epochs{{"beta", "seed_index", "epoch", "reconstruction", "cond_indep_loss", "elbo", "objective"}, {}};
        for (std::size_t i = 0; i < result.records.size(); ++i) {
            for (const auto& e : result.logs[i]) {
                epochs.rows.push_back({format_double(result.records[i].beta),
                                       std::to_string(result.records[i].seed_index), std::to_string(e.epoch),
                                       format_double(e.reconstruction), format_double(e.cond_indep_loss),
                                       format_double(e.elbo), format_double(e.objective)});
            }
        }
        write_table((fs::path(dir) / "neural_epochs.csv").string(), epochs);
    }
    if (ns.save_models && !result.networks.empty()) {
        fs::create_directories(fs::path(dir) / "models");
        for (std::size_t i = 0; i < result.records.size(); ++i) {
            const auto& r = result.records[i];
            const std::string name =
                "beta_" + format_double(r.beta) + "_seed_" + std::to_string(r.seed_index) + ".json";
            save_network(result.networks[i], (fs::path(dir) / "models" / name).string());
        }
    }

    nlohmann::json report{{"kl_non_increasing", result.report.kl_non_increasing},
                          {"tie_interior_min", result.report.tie_interior_min},
                          {"tie_argmin_beta", result.report.tie_argmin_beta},
                          {"detail", result.report.detail},
                          {"all_pass", result.report.all_pass()}};
    std::ofstream(fs::path(dir) / "neural_report.json") << report.dump(2) << '\n';

    nlohmann::json manifest;
    manifest["tool"] = "bvae_lab";
    manifest["version"] = BVAE_VERSION;
    manifest["config_hash"] = config_hash(config);
    manifest["config"] = nlohmann::json::parse(config_to_json(config));
    std::vector<std::uint64_t> seeds;
    for (Index s = 0; s < ns.n_seeds; ++s) seeds.push_back(neural_run_seed(ns, s));
    manifest["run_seeds"] = seeds;
    if (std::holds_alternative<MnistMixing>(config.model)) {
        manifest["mnist_indices"] = *make_model(config.model).mnist_indices;
    }
    std::ofstream(fs::path(dir) / "manifest.json") << manifest.dump(2) << '\n';
}

}  // namespace bvae
