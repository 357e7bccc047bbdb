#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "bvae/config.hpp"

using namespace bvae;

namespace {

std::string field_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<no error>";
}

const char* kMinimal = R"({"model": {"type": "formula", "N": 4, "k": 2, "diag": 1.0, "offset": 0.5}})";

}  // namespace

TEST(BetaGrid, DefaultHasExactOne) {
    const auto g = default_beta_grid();
    ASSERT_EQ(g.size(), 25u);
    EXPECT_DOUBLE_EQ(g.front(), 0.1);
    EXPECT_DOUBLE_EQ(g.back(), 10.0);
    EXPECT_EQ(g[12], 1.0);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g[i], g[i - 1]);
    EXPECT_NEAR(g[13], std::pow(10.0, 1.0 / 12.0), 1e-12);
}

TEST(BetaGrid, OneForcedOntoUnevenGrid) {
    const auto g = log_beta_grid(0.3, 5.0, 6);
    EXPECT_NE(std::find(g.begin(), g.end(), 1.0), g.end());
    EXPECT_EQ(g.size(), 6u);
    const auto above = log_beta_grid(2.0, 5.0, 4);
    EXPECT_EQ(std::find(above.begin(), above.end(), 1.0), above.end());
}

TEST(Config, MinimalGetsDefaults) {
    const LabConfig c = parse_config(kMinimal);
    const auto& f = std::get<FormulaMixing>(c.model);
    EXPECT_EQ(f.n, 4);
    EXPECT_EQ(f.k, 2);
    EXPECT_EQ(c.solver.n_restarts, 8);
    EXPECT_EQ(c.sweep.betas, default_beta_grid());
    EXPECT_FALSE(c.neural.has_value());
}

TEST(Config, ExplicitMatrix) {
    const LabConfig c = parse_config(R"({"model": {"type": "explicit", "A": [[1, 0], [0, 2], [3, 4]]}})");
    const Matrix& a = std::get<ExplicitMixing>(c.model).a;
    EXPECT_EQ(a.rows(), 3);
    EXPECT_EQ(a(2, 1), 4.0);
    EXPECT_EQ(field_of(R"({"model": {"type": "explicit", "A": [[1, 0], [0]]}})"), "model.A[1]");
    EXPECT_EQ(field_of(R"({"model": {"type": "explicit", "A": [[1, 0]]}})"), "model.A");
}

TEST(Config, ErrorsNameTheField) {
    EXPECT_EQ(field_of(R"({"model": {"type": "formula", "N": 4, "k": 2, "diag": 1, "offset": 0, "mixing": 1}})"),
              "model.mixing");
    EXPECT_EQ(field_of(std::string(R"({"model": {"type": "formula", "N": 4, "k": 2, "diag": 1, "offset": 0},)") +
                       R"("solver": {"n_restarts": "eight"}})"),
              "solver.n_restarts");
    EXPECT_EQ(field_of(std::string(R"({"model": {"type": "formula", "N": 4, "k": 2, "diag": 1, "offset": 0},)") +
                       R"("solver": {"n_restarts": 0}})"),
              "solver.n_restarts");
    EXPECT_EQ(field_of(std::string(R"({"model": {"type": "formula", "N": 4, "k": 2, "diag": 1, "offset": 0},)") +
                       R"("sweep": {"betas": [0.0, 1.0]}})"),
              "sweep.betas");
    EXPECT_EQ(field_of(std::string(R"({"model": {"type": "formula", "N": 4, "k": 2, "diag": 1, "offset": 0},)") +
                       R"("sweep": {"betas": [1.0], "grid": {}}})"),
              "sweep");
    EXPECT_EQ(field_of(R"({"model": {"type": "formula", "N": 1, "k": 2, "diag": 1, "offset": 0}})"), "model.N");
    EXPECT_EQ(field_of(R"({"model": {"type": "cube"}})"), "model.type");
    EXPECT_EQ(field_of(R"({"model": {"type": "formula", "N": 4, "k": 2, "diag": 1}})"), "model.offset");
    EXPECT_EQ(field_of(R"({"modle": {}})"), "model");
    EXPECT_EQ(field_of(std::string(R"({"model": {"type": "formula", "N": 4, "k": 2, "diag": 1, "offset": 0},)") +
                       R"("extra": 1})"),
              "extra");
    EXPECT_EQ(field_of("{not json"), "config");
    EXPECT_EQ(field_of(std::string(R"({"model": {"type": "formula", "N": 2, "k": 2, "diag": 1, "offset": 0},)") +
                       R"("neural": {"activation": "relu"}})"),
              "neural.activation");
}

TEST(Config, SweepBetasSortedAndDeduplicated) {
    const LabConfig c = parse_config(std::string(R"({"model": {"type": "formula", "N": 4, "k": 2, "diag": 1, "offset": 0},)") +
                                     R"("sweep": {"betas": [2.0, 0.5, 1.0, 2.0]}})");
    EXPECT_EQ(c.sweep.betas, (std::vector<double>{0.5, 1.0, 2.0}));
}

TEST(Config, NeuralSection) {
    const LabConfig c = parse_config(std::string(R"({"model": {"type": "formula", "N": 2, "k": 2, "diag": 2, "offset": 0.73},)") +
                                     R"("neural": {"encoder_hidden": [16], "epochs": 7, "n_seeds": 3}})");
    ASSERT_TRUE(c.neural.has_value());
    EXPECT_EQ(c.neural->encoder_hidden, std::vector<Index>{16});
    EXPECT_EQ(c.neural->decoder_hidden, (std::vector<Index>{200, 200, 256}));
    EXPECT_EQ(c.neural->train.epochs, 7);
    EXPECT_EQ(c.neural->n_seeds, 3);
    EXPECT_EQ(c.neural->betas, (std::vector<double>{0.2, 0.5, 1.0, 2.0, 4.0, 8.0}));
}

TEST(Config, NormalizedFormRoundTrips) {
    const LabConfig c = parse_config(kMinimal);
    const std::string norm = config_to_json(c);
    EXPECT_EQ(config_to_json(parse_config(norm)), norm);
    EXPECT_EQ(config_hash(parse_config(norm)), config_hash(c));
    EXPECT_EQ(config_hash(c).size(), 16u);
    // Whitespace and key order do not change the hash; values do.
    const LabConfig shuffled =
        parse_config(R"({ "model" : { "offset": 0.5, "diag": 1.0, "k": 2, "N": 4, "type": "formula" } })");
    EXPECT_EQ(config_hash(shuffled), config_hash(c));
    LabConfig other = c;
    other.solver.seed = 1;
    EXPECT_NE(config_hash(other), config_hash(c));
}

TEST(Config, LoadMissingFile) {
    EXPECT_THROW(load_config("/nonexistent/bvae.json"), ConfigError);
}

TEST(Workers, EnvironmentOverride) {
    ::setenv("BVAE_WORKERS", "3", 1);
    EXPECT_EQ(default_workers(), 3);
    ::setenv("BVAE_WORKERS", "zero", 1);
    EXPECT_THROW(default_workers(), ConfigError);
    ::unsetenv("BVAE_WORKERS");
    EXPECT_GE(default_workers(), 1);
}
