#pragma once

#include <array>
#include <string>
#include <vector>

#include "bvae/config.hpp"
#include "bvae/neural.hpp"

namespace bvae {

/// One trained network, evaluated after training on its own dataset.
struct NeuralRecord {
    double beta = 0.0;
    Index seed_index = 0;
    std::uint64_t seed = 0;
    double reconstruction = 0.0;
    double cond_indep_loss = 0.0;
    double elbo = 0.0;
    double objective = 0.0;
    double tie = 0.0;
    double tie_std_error = 0.0;
};

/// Mean, min and max over seeds at one beta.
struct NeuralSummary {
    double beta = 0.0;
    Index runs = 0;
    std::array<double, 3> cond_indep_loss{};  // mean, min, max
    std::array<double, 3> reconstruction{};
    std::array<double, 3> elbo{};
    std::array<double, 3> tie{};
};

struct NeuralReport {
    bool kl_non_increasing = false;
    bool tie_interior_min = false;
    double tie_argmin_beta = 0.0;
    std::string detail;

    bool all_pass() const { return kl_non_increasing && tie_interior_min; }
};

struct NeuralSweepResult {
    std::vector<NeuralRecord> records;  // sorted by (beta, seed_index)
    std::vector<NeuralSummary> summary;
    NeuralReport report;
    std::vector<std::vector<EpochLog>> logs;  // parallel to records
    std::vector<NeuralVae> networks;          // parallel to records when kept
};

/// Seed of run i: the dataset, initialization, noise and TIE samples all derive from it.
std::uint64_t neural_run_seed(const NeuralSettings& settings, Index seed_index);

MlpSpec mlp_spec(const NeuralSettings& settings, const GroundTruthModel& model);

NeuralSweepResult run_neural_sweep(const LabConfig& config, Index workers, bool keep_networks = false);

std::vector<NeuralSummary> summarize(const std::vector<NeuralRecord>& records);

/// Mean cond-indep loss non-increasing (slack 1e-6) and mean TIE argmin strictly inside the grid.
NeuralReport check_neural(const std::vector<NeuralSummary>& summary, double slack = 1e-6);

/// neural_records.csv, neural_summary.csv, neural_report.json, manifest.json, and
/// optionally neural_epochs.csv and models/.
void write_neural_outputs(const std::string& dir, const LabConfig& config, const NeuralSweepResult& result);

}  // namespace bvae
