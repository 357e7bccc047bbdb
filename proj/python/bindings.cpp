#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bvae/config.hpp"
#include "bvae/csv.hpp"
#include "bvae/gaussian.hpp"
#include "bvae/generative.hpp"
#include "bvae/linear_bvae.hpp"
#include "bvae/metrics.hpp"
#include "bvae/neural_sweep.hpp"
#include "bvae/solver.hpp"
#include "bvae/sweep.hpp"

namespace py = pybind11;
using namespace bvae;

namespace {

py::dict record_dict(const SweepRecord& r) {
    py::dict d;
    d["beta"] = r.beta;
    d["restart"] = r.restart;
    d["seed"] = r.seed;
    d["objective_paper"] = r.objective_paper;
    d["elbo"] = r.elbo;
    d["reconstruction"] = r.reconstruction;
    d["cond_indep_loss"] = r.cond_indep_loss;
    d["data_log_likelihood"] = r.data_log_likelihood;
    d["mie"] = r.mie;
    d["tie"] = r.tie;
    d["grad_norm"] = r.grad_norm;
    d["residual_max"] = r.residual_max;
    d["converged"] = r.converged;
    return d;
}

py::dict check_dict(const CheckOutcome& c) {
    py::dict d;
    d["applicable"] = c.applicable;
    d["pass"] = c.pass;
    d["offending"] = c.offending ? py::cast(*c.offending) : py::none();
    d["detail"] = c.detail;
    return d;
}

py::dict report_dict(const PropositionReport& r) {
    py::dict d;
    d["prop1"] = check_dict(r.prop1);
    d["prop2_kl"] = check_dict(r.prop2_kl);
    d["prop2_recon"] = check_dict(r.prop2_recon);
    d["prop3"] = check_dict(r.prop3);
    d["tie_interior_min"] = check_dict(r.tie_interior_min);
    d["fixed_decoder_mie_min_at_1"] = check_dict(r.fixed_decoder_mie_min_at_1);
    d["all_pass"] = r.all_pass();
    return d;
}

py::dict outcome_dict(const RestartOutcome& o) {
    py::dict d;
    d["restart"] = o.restart;
    d["seed"] = o.seed;
    d["params"] = o.params;
    d["objective"] = o.diagnostics.objective;
    d["grad_norm"] = o.diagnostics.grad_norm;
    d["residual_max"] = o.diagnostics.residual_max;
    d["converged"] = o.diagnostics.converged;
    d["iterations"] = o.diagnostics.iterations;
    d["trajectory"] = o.trajectory;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Linear Gaussian beta-VAE lab";
    m.attr("__version__") = BVAE_PY_VERSION;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::class_<GroundTruthModel>(m, "GroundTruthModel")
        .def(py::init<Matrix>(), py::arg("mixing"))
        .def_static("from_formula", &GroundTruthModel::from_formula, py::arg("n"), py::arg("k"), py::arg("diag"),
                    py::arg("offset"))
        .def_property_readonly("mixing", &GroundTruthModel::mixing)
        .def_property_readonly("data_dim", &GroundTruthModel::data_dim)
        .def_property_readonly("latent_dim", &GroundTruthModel::latent_dim);

    m.def("data_covariance", &data_covariance, py::arg("model"));
    m.def(
        "ground_truth_posterior",
        [](const GroundTruthModel& model) {
            const LinearPosterior p = ground_truth_posterior(model);
            return py::make_tuple(p.mean_map(), p.cov());
        },
        py::arg("model"), "(F, E) with q(s|x) = N(F x, E).");
    m.def(
        "sample_data",
        [](const GroundTruthModel& model, Index n, std::uint64_t seed) {
            Samples s = sample_data(model, n, seed);
            return py::make_tuple(std::move(s.x), std::move(s.sources));
        },
        py::arg("model"), py::arg("n"), py::arg("seed"));

    py::class_<EncoderParams>(m, "EncoderParams")
        .def(py::init([](Index n, Index k) { return EncoderParams::zeros(n, k); }), py::arg("n"), py::arg("k"))
        .def_readwrite("w_mu", &EncoderParams::w_mu)
        .def_readwrite("b_mu", &EncoderParams::b_mu)
        .def_readwrite("w_sigma", &EncoderParams::w_sigma)
        .def_readwrite("b_sigma", &EncoderParams::b_sigma);

    py::class_<DecoderParams>(m, "DecoderParams")
        .def(py::init([](Index n, Index k) { return DecoderParams::zeros(n, k); }), py::arg("n"), py::arg("k"))
        .def_readwrite("d", &DecoderParams::d)
        .def_readwrite("b_d", &DecoderParams::b_d);

    py::class_<LinearParams>(m, "LinearParams")
        .def(py::init([](Index n, Index k) { return LinearParams::zeros(n, k); }), py::arg("n"), py::arg("k"))
        .def_readwrite("enc", &LinearParams::enc)
        .def_readwrite("dec", &LinearParams::dec)
        .def("flatten", &LinearParams::flatten)
        .def_static("unflatten", &LinearParams::unflatten, py::arg("flat"), py::arg("n"), py::arg("k"))
        .def_static("flat_size", &LinearParams::flat_size);

    m.def(
        "objective_paper",
        [](const LinearParams& p, const Matrix& sigma_x, double beta) {
            return objective_paper(p.enc, p.dec, sigma_x, beta);
        },
        py::arg("params"), py::arg("sigma_x"), py::arg("beta"));
    m.def(
        "objective_full",
        [](const LinearParams& p, const Matrix& sigma_x, double beta) {
            return objective_full(p.enc, p.dec, sigma_x, beta);
        },
        py::arg("params"), py::arg("sigma_x"), py::arg("beta"));
    m.def(
        "gradient",
        [](const LinearParams& p, const Matrix& sigma_x, double beta) {
            return gradient(p.enc, p.dec, sigma_x, beta).flatten();
        },
        py::arg("params"), py::arg("sigma_x"), py::arg("beta"), "Gradient flattened in LinearParams order.");
    m.def(
        "elbo_terms",
        [](const LinearParams& p, const Matrix& sigma_x) {
            const ElboTerms t = elbo_terms(p.enc, p.dec, sigma_x);
            py::dict d;
            d["reconstruction"] = t.reconstruction;
            d["cond_indep_loss"] = t.cond_indep_loss;
            d["elbo"] = t.elbo;
            return d;
        },
        py::arg("params"), py::arg("sigma_x"));
    m.def(
        "mie",
        [](const LinearParams& p, const Matrix& sigma_x) {
            return inference_error(p.enc, model_posterior(p.dec), sigma_x);
        },
        py::arg("params"), py::arg("sigma_x"));
    m.def(
        "tie",
        [](const LinearParams& p, const GroundTruthModel& model, bool align) {
            const Matrix s = data_covariance(model);
            const LinearPosterior post = ground_truth_posterior(model);
            return align ? aligned_inference_error(p.enc, post, s) : inference_error(p.enc, post, s);
        },
        py::arg("params"), py::arg("model"), py::arg("align") = true);
    m.def(
        "data_log_likelihood",
        [](const LinearParams& p, const Matrix& sigma_x) { return data_log_likelihood(p.dec, sigma_x); },
        py::arg("params"), py::arg("sigma_x"));
    m.def("optimal_encoder", &optimal_encoder, py::arg("d"), py::arg("beta"));

    m.def(
        "solve",
        [](const GroundTruthModel& model, double beta, Index n_restarts, std::uint64_t seed, bool freeze_decoder) {
            SolverConfig cfg;
            cfg.beta = beta;
            cfg.n_restarts = n_restarts;
            cfg.seed = seed;
            cfg.freeze_decoder = freeze_decoder;
            cfg.validate();
            SolveResult r;
            {
                py::gil_scoped_release release;
                r = solve_stationary(model, cfg);
            }
            py::dict d = outcome_dict(r.best());
            d["all_converged"] = r.converged;
            return d;
        },
        py::arg("model"), py::arg("beta") = 1.0, py::arg("n_restarts") = 8, py::arg("seed") = 0,
        py::arg("freeze_decoder") = false);

    m.def("default_beta_grid", &default_beta_grid);
    m.def(
        "config_hash", [](const std::string& text) { return config_hash(parse_config(text)); }, py::arg("json_text"));
    m.def(
        "normalize_config", [](const std::string& text) { return config_to_json(parse_config(text)); },
        py::arg("json_text"));

    m.def(
        "run_sweep",
        [](const std::string& text, Index workers, const std::string& out_dir) {
            const LabConfig cfg = parse_config(text);
            SweepResult result;
            PropositionReport report;
            {
                py::gil_scoped_release release;
                result = run_sweep(cfg, workers > 0 ? workers : default_workers());
                report = check_propositions(result.best, result.freeze_decoder);
                if (!out_dir.empty()) write_sweep_outputs(out_dir, cfg, result, report);
            }
            py::list records, best;
            for (const auto& r : result.records) records.append(record_dict(r));
            for (const auto& r : result.best) best.append(record_dict(r));
            py::dict d;
            d["betas"] = result.betas;
            d["records"] = records;
            d["best"] = best;
            d["report"] = report_dict(report);
            return d;
        },
        py::arg("json_text"), py::arg("workers") = 0, py::arg("out_dir") = "",
        "Runs a configured sweep; writes the CSV/JSON outputs when out_dir is given.");
    m.def(
        "check_results", [](const std::string& dir) { return report_dict(check_results_dir(dir)); },
        py::arg("results_dir"));
    m.def(
        "read_records",
        [](const std::string& path) {
            py::list out;
            for (const auto& r : read_records(path)) out.append(record_dict(r));
            return out;
        },
        py::arg("path"));
    m.def("sweep_record_columns", &sweep_record_columns);

    m.def(
        "run_neural_sweep",
        [](const std::string& text, Index workers, const std::string& out_dir) {
            const LabConfig cfg = parse_config(text);
            NeuralSweepResult result;
            {
                py::gil_scoped_release release;
                result = run_neural_sweep(cfg, workers > 0 ? workers : default_workers());
                if (!out_dir.empty()) write_neural_outputs(out_dir, cfg, result);
            }
            py::list summary;
            for (const auto& s : result.summary) {
                py::dict d;
                d["beta"] = s.beta;
                d["runs"] = s.runs;
                d["cond_indep_loss"] = s.cond_indep_loss;
                d["reconstruction"] = s.reconstruction;
                d["elbo"] = s.elbo;
                d["tie"] = s.tie;
                summary.append(d);
            }
            py::dict rep;
            rep["kl_non_increasing"] = result.report.kl_non_increasing;
            rep["tie_interior_min"] = result.report.tie_interior_min;
            rep["tie_argmin_beta"] = result.report.tie_argmin_beta;
            rep["all_pass"] = result.report.all_pass();
            py::dict d;
            d["summary"] = summary;
            d["report"] = rep;
            return d;
        },
        py::arg("json_text"), py::arg("workers") = 0, py::arg("out_dir") = "");
}
