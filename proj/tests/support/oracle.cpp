#include "oracle.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bvae/gaussian.hpp"
#include "bvae/rng.hpp"

namespace bvae::oracle {

namespace {

constexpr std::uint64_t kZStreamTag = 0x7a;

// Running mean and variance (Welford).
class Accumulator {
public:
    void add(double v) {
        ++n_;
        const double delta = v - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (v - mean_);
    }

    Estimate estimate() const {
        if (n_ < 2) return {mean_, 0.0};
        const double var = m2_ / static_cast<double>(n_ - 1);
        return {mean_, std::sqrt(var / static_cast<double>(n_))};
    }

private:
    Index n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

void check(const McConfig& cfg) {
    if (cfg.n_x_samples < 1 || cfg.n_z_samples < 1) {
        throw std::invalid_argument("McConfig: sample counts must be >= 1");
    }
}

Gaussian encoder_at(const EncoderParams& enc, const Vector& x) {
    const Vector log_var = enc.w_sigma * x + enc.b_sigma;
    return {enc.w_mu * x + enc.b_mu, log_var.array().exp().matrix().asDiagonal()};
}

}  // namespace

bool Estimate::within(double value, double n_se) const {
    return std::abs(mean - value) <= n_se * std_error;
}

ObjectiveEstimate mc_objective(const EncoderParams& enc, const DecoderParams& dec,
                               const GroundTruthModel& model, double beta, const McConfig& cfg) {
    check(cfg);
    const Samples data = sample_data(model, cfg.n_x_samples, cfg.seed);
    const Index n = model.data_dim();
    const Index k = enc.latent_dim();
    const Gaussian prior = Gaussian::standard(k);
    const double log_norm = -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    Accumulator objective, recon, kl;
    for (Index row = 0; row < cfg.n_x_samples; ++row) {
        const Vector x = data.x.row(row).transpose();
        const Gaussian q = encoder_at(enc, x);
        const Vector sd = q.cov().diagonal().cwiseSqrt();

        // Reparametrized draws z = mu + sd * eps.
        const CounterStream eps(derive_seed(cfg.seed, kZStreamTag), static_cast<std::uint64_t>(row));
        double recon_x = 0.0;
        Vector z(k);
        for (Index j = 0; j < cfg.n_z_samples; ++j) {
            for (Index i = 0; i < k; ++i) {
                z(i) = q.mean()(i) + sd(i) * eps.normal(static_cast<std::uint64_t>(j * k + i));
            }
            recon_x += log_norm - 0.5 * (x - dec.d * z - dec.b_d).squaredNorm();
        }
        recon_x /= static_cast<double>(cfg.n_z_samples);
        const double kl_x = gaussian_kl(q, prior);

        recon.add(recon_x);
        kl.add(kl_x);
        objective.add(recon_x - beta * kl_x);
    }
    return {objective.estimate(), recon.estimate(), kl.estimate()};
}

Estimate mc_inference_error(const EncoderParams& enc, const LinearPosterior& posterior,
                            const GroundTruthModel& model, const McConfig& cfg) {
    check(cfg);
    const Samples data = sample_data(model, cfg.n_x_samples, cfg.seed);
    Accumulator acc;
    for (Index row = 0; row < cfg.n_x_samples; ++row) {
        const Vector x = data.x.row(row).transpose();
        acc.add(gaussian_kl(encoder_at(enc, x), posterior.at(x)));
    }
    return acc.estimate();
}

Estimate mc_data_log_likelihood(const DecoderParams& dec, const GroundTruthModel& model,
                                const McConfig& cfg) {
    check(cfg);
    const Samples data = sample_data(model, cfg.n_x_samples, cfg.seed);
    Matrix cov = dec.d * dec.d.transpose();
    cov.diagonal().array() += 1.0;
    const Gaussian evidence(dec.b_d, cov);
    Accumulator acc;
    for (Index row = 0; row < cfg.n_x_samples; ++row) {
        acc.add(evidence.log_density(data.x.row(row).transpose()));
    }
    return acc.estimate();
}

Vector fd_gradient(const ScalarFunction& f, const Vector& p, double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("fd_gradient: h must be > 0");
    }
    Vector g(p.size());
    Vector probe = p;
    for (Index i = 0; i < p.size(); ++i) {
        probe(i) = p(i) + h;
        const double up = f(probe);
        probe(i) = p(i) - h;
        const double down = f(probe);
        probe(i) = p(i);
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

double relative_error(const Vector& a, const Vector& b) {
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace bvae::oracle
