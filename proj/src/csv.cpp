#include "bvae/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bvae {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

double parse_double(const std::string& s, std::size_t line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
        throw std::runtime_error("records line " + std::to_string(line) + ": bad number '" + s + "'");
    }
    return v;
}

std::uint64_t parse_uint(const std::string& s, std::size_t line) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || s[0] == '-' || end != s.c_str() + s.size()) {
        throw std::runtime_error("records line " + std::to_string(line) + ": bad integer '" + s + "'");
    }
    return v;
}

bool parse_bool(const std::string& s, std::size_t line) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw std::runtime_error("records line " + std::to_string(line) + ": bad boolean '" + s + "'");
}

std::string join(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) out += ',';
        out += cells[i];
    }
    return out;
}

}  // namespace

const std::vector<std::string>& sweep_record_columns() {
    static const std::vector<std::string> cols{
        "beta", "restart", "seed", "objective_paper", "elbo", "reconstruction", "cond_indep_loss",
        "data_log_likelihood", "mie", "tie", "grad_norm", "residual_max", "converged"};
    return cols;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_records(std::ostream& out, const std::vector<SweepRecord>& records) {
    out << join(sweep_record_columns()) << '\n';
    for (const auto& r : records) {
        out << join({format_double(r.beta), std::to_string(r.restart), std::to_string(r.seed),
                     format_double(r.objective_paper), format_double(r.elbo), format_double(r.reconstruction),
                     format_double(r.cond_indep_loss), format_double(r.data_log_likelihood),
                     format_double(r.mie), format_double(r.tie), format_double(r.grad_norm),
                     format_double(r.residual_max), r.converged ? "true" : "false"})
            << '\n';
    }
}

void write_records(const std::string& path, const std::vector<SweepRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    write_records(out, records);
}

std::vector<SweepRecord> read_records(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || split(line) != sweep_record_columns()) {
        throw std::runtime_error("records: header does not match the sweep record schema");
    }
    std::vector<SweepRecord> out;
    for (std::size_t n = 2; std::getline(in, line); ++n) {
        if (line.empty()) continue;
        const auto c = split(line);
        if (c.size() != sweep_record_columns().size()) {
            throw std::runtime_error("records line " + std::to_string(n) + ": expected " +
                                     std::to_string(sweep_record_columns().size()) + " cells");
        }
        SweepRecord r;
        r.beta = parse_double(c[0], n);
        r.restart = static_cast<Index>(parse_uint(c[1], n));
        r.seed = parse_uint(c[2], n);
        r.objective_paper = parse_double(c[3], n);
        r.elbo = parse_double(c[4], n);
        r.reconstruction = parse_double(c[5], n);
        r.cond_indep_loss = parse_double(c[6], n);
        r.data_log_likelihood = parse_double(c[7], n);
        r.mie = parse_double(c[8], n);
        r.tie = parse_double(c[9], n);
        r.grad_norm = parse_double(c[10], n);
        r.residual_max = parse_double(c[11], n);
        r.converged = parse_bool(c[12], n);
        out.push_back(r);
    }
    return out;
}

std::vector<SweepRecord> read_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path);
    }
    return read_records(in);
}

void write_table(const std::string& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << join(table.header) << '\n';
    for (const auto& row : table.rows) {
        out << join(row) << '\n';
    }
}

}  // namespace bvae
