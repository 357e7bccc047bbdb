#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bvae/gaussian.hpp"

namespace bvae {

/// One (beta, restart) solve. mie, tie and data_log_likelihood are NaN when the
/// solution's biases are too far from zero for their closed forms.
struct SweepRecord {
    double beta = 0.0;
    Index restart = 0;
    std::uint64_t seed = 0;
    double objective_paper = 0.0;
    double elbo = 0.0;
    double reconstruction = 0.0;
    double cond_indep_loss = 0.0;
    double data_log_likelihood = 0.0;
    double mie = 0.0;
    double tie = 0.0;
    double grad_norm = 0.0;
    double residual_max = 0.0;
    bool converged = false;

    bool operator==(const SweepRecord&) const = default;
};

/// Header row in field declaration order.
const std::vector<std::string>& sweep_record_columns();

/// %.17g, which round-trips every finite double.
std::string format_double(double v);

void write_records(std::ostream& out, const std::vector<SweepRecord>& records);
void write_records(const std::string& path, const std::vector<SweepRecord>& records);

/// Throws std::runtime_error on a header mismatch or malformed row.
std::vector<SweepRecord> read_records(std::istream& in);
std::vector<SweepRecord> read_records(const std::string& path);

/// Minimal CSV table: header plus rows of raw cells, comma separated, no quoting.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

void write_table(const std::string& path, const CsvTable& table);

}  // namespace bvae
