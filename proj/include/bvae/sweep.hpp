#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bvae/config.hpp"
#include "bvae/csv.hpp"
#include "bvae/metrics.hpp"
#include "bvae/solver.hpp"

namespace bvae {

/// Runs task(i) for i in [0, count) on `workers` threads. Exceptions are rethrown
/// (the one from the lowest task index) after all workers stop.
void parallel_for(Index count, Index workers, const std::function<void(Index)>& task);

/// Evaluates every reported quantity for one solved restart.
SweepRecord make_record(double beta, const RestartOutcome& outcome, const GroundTruthModel& model,
                        const Matrix& sigma_x);

struct SweepResult {
    std::vector<double> betas;
    std::vector<SweepRecord> records;    // sorted by (beta, restart)
    std::vector<SweepRecord> best;       // one per beta, chosen by select_best
    std::vector<RestartOutcome> best_outcomes;  // parameters behind `best`
    bool freeze_decoder = false;
};

SweepResult run_sweep(const LabConfig& config, Index workers);

/// Per-beta min and max over restarts of the plotted columns.
struct Envelope {
    double beta = 0.0;
    std::vector<std::pair<double, double>> ranges;  // parallel to envelope_columns()
};

const std::vector<std::string>& envelope_columns();
std::vector<Envelope> envelopes(const std::vector<SweepRecord>& records);

struct CheckOutcome {
    bool applicable = true;
    bool pass = false;
    std::optional<std::pair<double, double>> offending;  // beta pair when failing
    std::string detail;
};

struct PropositionReport {
    CheckOutcome prop1;
    CheckOutcome prop2_kl;
    CheckOutcome prop2_recon;
    CheckOutcome prop3;
    CheckOutcome tie_interior_min;
    CheckOutcome fixed_decoder_mie_min_at_1;

    /// All applicable checks pass.
    bool all_pass() const;
};

inline constexpr double kMonotonicSlack = 1e-6;

/// Works on best-per-beta rows (any order). tie_interior_min applies to sweeps with
/// a trained decoder, fixed_decoder_mie_min_at_1 to freeze_decoder sweeps. Throws
/// std::invalid_argument when the grid has fewer than 3 points or lacks beta = 1.
PropositionReport check_propositions(std::vector<SweepRecord> best, bool freeze_decoder,
                                     double slack = kMonotonicSlack);

/// records.csv, best.csv, manifest.json and report.json under `dir` (created if missing).
void write_sweep_outputs(const std::string& dir, const LabConfig& config, const SweepResult& result,
                         const PropositionReport& report);

/// Reads best.csv and manifest.json back from a sweep directory and re-runs the checks.
PropositionReport check_results_dir(const std::string& dir);

std::string report_to_json(const PropositionReport& report, const std::vector<Envelope>& env);

}  // namespace bvae
