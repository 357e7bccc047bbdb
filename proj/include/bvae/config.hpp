#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bvae/dataset.hpp"
#include "bvae/neural.hpp"
#include "bvae/solver.hpp"

namespace bvae {

/// Schema violation; `field()` is the dotted path of the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& why)
        : std::runtime_error(field + ": " + why), field_(std::move(field)) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct SweepSettings {
    std::vector<double> betas;  // sorted ascending, distinct
};

struct NeuralSettings {
    std::vector<Index> encoder_hidden{256, 200, 200};
    std::vector<Index> decoder_hidden{200, 200, 256};
    Activation activation = Activation::Tanh;
    TrainConfig train;                                      // beta and seed are set per run
    std::vector<double> betas{0.2, 0.5, 1.0, 2.0, 4.0, 8.0};
    Index n_seeds = 100;
    std::uint64_t seed = 0;
    Index tie_samples = 10000;
    bool align_tie = true;
    bool save_models = false;
    bool write_epoch_log = false;
};

struct LabConfig {
    MixingSpec model = FormulaMixing{};
    SolverConfig solver;
    SweepSettings sweep;
    std::optional<NeuralSettings> neural;
};

/// 25 points log-spaced on [0.1, 10]; the point nearest 1 is replaced by exactly 1.
std::vector<double> default_beta_grid();

/// log-spaced grid on [lo, hi] with `points` entries and beta = 1 forced onto it
/// when 1 lies inside the range.
std::vector<double> log_beta_grid(double lo, double hi, Index points);

/// Parses and validates; unknown keys are errors.
LabConfig parse_config(const std::string& json_text);
LabConfig load_config(const std::string& path);

/// Normalized JSON (all defaults explicit, keys sorted).
std::string config_to_json(const LabConfig& config);

/// FNV-1a 64 of config_to_json, as 16 hex digits.
std::string config_hash(const LabConfig& config);

/// Worker count from BVAE_WORKERS, else the hardware concurrency (at least 1).
Index default_workers();

}  // namespace bvae
