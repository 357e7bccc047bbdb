#include "bvae/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace bvae {

namespace {

using nlohmann::json;

// Strict view over one JSON object: typed accessors, and finish() rejects keys
// that were never read.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(path_, "must be an object");
        }
    }

    std::string field(const std::string& key) const { return path_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        if (has(key)) {
            out = convert<T>(raw(key), field(key));
        }
    }

    template <typename T>
    T require(const std::string& key) {
        if (!has(key)) {
            throw ConfigError(field(key), "required");
        }
        return convert<T>(raw(key), field(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.contains(it.key())) {
                throw ConfigError(field(it.key()), "unknown key");
            }
        }
    }

    template <typename T>
    static T convert(const json& v, const std::string& where) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(where, "expected a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ConfigError(where, "expected a number");
            const double d = v.get<double>();
            if (!std::isfinite(d)) throw ConfigError(where, "must be finite");
            return d;
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
                throw ConfigError(where, "expected a non-negative integer");
            }
            return v.get<std::uint64_t>();
        } else if constexpr (std::is_same_v<T, Index>) {
            if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
            return v.get<Index>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(where, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::vector<double>> || std::is_same_v<T, std::vector<Index>>) {
            if (!v.is_array()) throw ConfigError(where, "expected an array");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
            }
            return out;
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

MixingSpec parse_model(const json& j) {
    Section s(j, "model");
    const auto type = s.require<std::string>("type");
    MixingSpec spec;
    if (type == "formula") {
        FormulaMixing f;
        f.n = s.require<Index>("N");
        f.k = s.require<Index>("k");
        f.diag = s.require<double>("diag");
        f.offset = s.require<double>("offset");
        if (f.k < 1) throw ConfigError("model.k", "must be >= 1");
        if (f.n < f.k) throw ConfigError("model.N", "must be >= k");
        spec = f;
    } else if (type == "explicit") {
        if (!s.has("A")) throw ConfigError("model.A", "required");
        const json& a = s.raw("A");
        if (!a.is_array() || a.empty()) throw ConfigError("model.A", "expected a non-empty array of rows");
        const auto rows = static_cast<Index>(a.size());
        Index cols = -1;
        Matrix m;
        for (Index i = 0; i < rows; ++i) {
            const auto where = "model.A[" + std::to_string(i) + "]";
            const auto row = Section::convert<std::vector<double>>(a[static_cast<std::size_t>(i)], where);
            if (cols < 0) {
                cols = static_cast<Index>(row.size());
                m.resize(rows, cols);
            }
            if (static_cast<Index>(row.size()) != cols) throw ConfigError(where, "ragged row");
            for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)];
        }
        if (cols < 1 || rows < cols) throw ConfigError("model.A", "need N >= k >= 1 (N rows, k columns)");
        spec = ExplicitMixing{m};
    } else if (type == "mnist") {
        spec = MnistMixing{s.require<std::string>("images"), s.require<std::string>("labels")};
    } else {
        throw ConfigError("model.type", "expected formula, explicit or mnist");
    }
    s.finish();
    return spec;
}

SolverConfig parse_solver(const json& j) {
    SolverConfig c;
    Section s(j, "solver");
    s.get("max_iters", c.max_iters);
    s.get("grad_tol", c.grad_tol);
    s.get("n_restarts", c.n_restarts);
    s.get("init_scale", c.init_scale);
    s.get("freeze_decoder", c.freeze_decoder);
    s.get("seed", c.seed);
    s.get("frozen_decoder_seed", c.frozen_decoder_seed);
    s.get("frozen_decoder_scale", c.frozen_decoder_scale);
    if (s.has("step_rule")) {
        Section r(s.raw("step_rule"), "solver.step_rule");
        r.get("adam_learning_rate", c.step_rule.adam_learning_rate);
        r.get("adam_iters", c.step_rule.adam_iters);
        r.get("adam_decay", c.step_rule.adam_decay);
        r.get("lbfgs_memory", c.step_rule.lbfgs_memory);
        r.finish();
    }
    s.finish();
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        const std::string what = e.what();
        throw ConfigError(what.substr(0, what.find(':')), what.substr(what.find(':') + 2));
    }
    return c;
}

void check_betas(const std::vector<double>& betas, const std::string& where) {
    if (betas.empty()) throw ConfigError(where, "must not be empty");
    for (const double b : betas) {
        if (!(b >= kMinBeta)) {
            throw ConfigError(where, "every beta must be >= 1e-3 (minimum accepted beta)");
        }
    }
}

std::vector<double> sorted_unique(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

SweepSettings parse_sweep(const json& j) {
    SweepSettings out;
    Section s(j, "sweep");
    if (s.has("betas") && s.has("grid")) {
        throw ConfigError("sweep", "give either betas or grid, not both");
    }
    if (s.has("betas")) {
        out.betas = s.require<std::vector<double>>("betas");
        check_betas(out.betas, "sweep.betas");
        out.betas = sorted_unique(out.betas);
    } else if (s.has("grid")) {
        Section g(s.raw("grid"), "sweep.grid");
        double lo = 0.1;
        double hi = 10.0;
        Index points = 25;
        g.get("min", lo);
        g.get("max", hi);
        g.get("points", points);
        g.finish();
        if (!(lo >= kMinBeta)) throw ConfigError("sweep.grid.min", "must be >= 1e-3 (minimum accepted beta)");
        if (!(hi > lo)) throw ConfigError("sweep.grid.max", "must exceed min");
        if (points < 2) throw ConfigError("sweep.grid.points", "must be >= 2");
        out.betas = log_beta_grid(lo, hi, points);
    } else {
        out.betas = default_beta_grid();
    }
    s.finish();
    return out;
}

NeuralSettings parse_neural(const json& j) {
    NeuralSettings n;
    Section s(j, "neural");
    s.get("encoder_hidden", n.encoder_hidden);
    s.get("decoder_hidden", n.decoder_hidden);
    if (s.has("activation")) {
        try {
            n.activation = parse_activation(s.require<std::string>("activation"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("neural.activation", e.what());
        }
    }
    s.get("epochs", n.train.epochs);
    s.get("learning_rate", n.train.learning_rate);
    s.get("batch_size", n.train.batch_size);
    s.get("n_examples", n.train.n_examples);
    s.get("zero_init_heads", n.train.zero_init_heads);
    s.get("betas", n.betas);
    s.get("n_seeds", n.n_seeds);
    s.get("seed", n.seed);
    s.get("tie_samples", n.tie_samples);
    s.get("align_tie", n.align_tie);
    s.get("save_models", n.save_models);
    s.get("write_epoch_log", n.write_epoch_log);
    s.finish();

    for (const Index w : n.encoder_hidden) {
        if (w < 1) throw ConfigError("neural.encoder_hidden", "widths must be >= 1");
    }
    for (const Index w : n.decoder_hidden) {
        if (w < 1) throw ConfigError("neural.decoder_hidden", "widths must be >= 1");
    }
    if (n.train.epochs < 1) throw ConfigError("neural.epochs", "must be >= 1");
    if (!(n.train.learning_rate > 0.0)) throw ConfigError("neural.learning_rate", "must be > 0");
    if (n.train.batch_size < 1) throw ConfigError("neural.batch_size", "must be >= 1");
    if (n.train.n_examples < 1) throw ConfigError("neural.n_examples", "must be >= 1");
    if (n.n_seeds < 1) throw ConfigError("neural.n_seeds", "must be >= 1");
    if (n.tie_samples < 2) throw ConfigError("neural.tie_samples", "must be >= 2");
    check_betas(n.betas, "neural.betas");
    n.betas = sorted_unique(n.betas);
    return n;
}

json model_to_json(const MixingSpec& spec) {
    return std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, FormulaMixing>) {
                return {{"type", "formula"}, {"N", m.n}, {"k", m.k}, {"diag", m.diag}, {"offset", m.offset}};
            } else if constexpr (std::is_same_v<T, ExplicitMixing>) {
                json rows = json::array();
                for (Index i = 0; i < m.a.rows(); ++i) {
                    std::vector<double> r(static_cast<std::size_t>(m.a.cols()));
                    for (Index c = 0; c < m.a.cols(); ++c) r[static_cast<std::size_t>(c)] = m.a(i, c);
                    rows.push_back(r);
                }
                return {{"type", "explicit"}, {"A", rows}};
            } else {
                return {{"type", "mnist"}, {"images", m.images}, {"labels", m.labels}};
            }
        },
        spec);
}

}  // namespace

std::vector<double> log_beta_grid(double lo, double hi, Index points) {
    std::vector<double> grid;
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    for (Index i = 0; i < points; ++i) {
        grid.push_back(std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1)));
    }
    grid.front() = lo;
    grid.back() = hi;
    if (lo <= 1.0 && 1.0 <= hi) {
        auto nearest = std::min_element(grid.begin(), grid.end(), [](double x, double y) {
            return std::abs(std::log(x)) < std::abs(std::log(y));
        });
        *nearest = 1.0;
    }
    return sorted_unique(grid);
}

std::vector<double> default_beta_grid() {
    return log_beta_grid(0.1, 10.0, 25);
}

LabConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
    Section top(j, "config");
    LabConfig c;
    if (!top.has("model")) throw ConfigError("model", "required");
    c.model = parse_model(top.raw("model"));
    if (top.has("solver")) c.solver = parse_solver(top.raw("solver"));
    c.sweep = top.has("sweep") ? parse_sweep(top.raw("sweep")) : SweepSettings{default_beta_grid()};
    if (top.has("neural")) c.neural = parse_neural(top.raw("neural"));
    try {
        top.finish();
    } catch (const ConfigError& e) {
        // Report top-level keys without the synthetic prefix.
        throw ConfigError(e.field().substr(std::string("config.").size()), "unknown section");
    }
    return c;
}

LabConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config", "cannot read " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const LabConfig& c) {
    json j;
    j["model"] = model_to_json(c.model);
    const SolverConfig& s = c.solver;
    j["solver"] = {{"max_iters", s.max_iters},
                   {"grad_tol", s.grad_tol},
                   {"n_restarts", s.n_restarts},
                   {"init_scale", s.init_scale},
                   {"freeze_decoder", s.freeze_decoder},
                   {"seed", s.seed},
                   {"frozen_decoder_seed", s.frozen_decoder_seed},
                   {"frozen_decoder_scale", s.frozen_decoder_scale},
                   {"step_rule",
                    {{"adam_learning_rate", s.step_rule.adam_learning_rate},
                     {"adam_iters", s.step_rule.adam_iters},
                     {"adam_decay", s.step_rule.adam_decay},
                     {"lbfgs_memory", s.step_rule.lbfgs_memory}}}};
    j["sweep"] = {{"betas", c.sweep.betas}};
    if (c.neural) {
        const NeuralSettings& n = *c.neural;
        j["neural"] = {{"encoder_hidden", n.encoder_hidden},
                       {"decoder_hidden", n.decoder_hidden},
                       {"activation", to_string(n.activation)},
                       {"epochs", n.train.epochs},
                       {"learning_rate", n.train.learning_rate},
                       {"batch_size", n.train.batch_size},
                       {"n_examples", n.train.n_examples},
                       {"zero_init_heads", n.train.zero_init_heads},
                       {"betas", n.betas},
                       {"n_seeds", n.n_seeds},
                       {"seed", n.seed},
                       {"tie_samples", n.tie_samples},
                       {"align_tie", n.align_tie},
                       {"save_models", n.save_models},
                       {"write_epoch_log", n.write_epoch_log}};
    }
    return j.dump();
}

std::string config_hash(const LabConfig& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char ch : config_to_json(config)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Index default_workers() {
    if (const char* env = std::getenv("BVAE_WORKERS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != nullptr && *end == '\0' && v >= 1) {
            return static_cast<Index>(v);
        }
        throw ConfigError("BVAE_WORKERS", "must be a positive integer");
    }
    return std::max<Index>(1, static_cast<Index>(std::thread::hardware_concurrency()));
}

}  // namespace bvae
