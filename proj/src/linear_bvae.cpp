#include "bvae/linear_bvae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace bvae {

namespace {

// Quantities shared by the objective, its gradient and the residuals.
struct Pieces {
    Matrix w_sigma_x;   // W_mu Sigma_x, k x N
    Matrix v_sigma_x;   // W_sigma Sigma_x, k x N
    Matrix w_sigma_wt;  // W_mu Sigma_x W_mu^T, k x k
    Matrix dtd;         // D^T D, k x k
    Vector e;           // expected variances
    Vector active;      // 1 where the exponent is below the clamp, else 0
    Vector r;           // D b_mu + b_D
    bool clamped = false;
};

Pieces compute_pieces(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x) {
    check_compatible(enc, dec, sigma_x);
    Pieces p;
    p.w_sigma_x = enc.w_mu * sigma_x;
    p.v_sigma_x = enc.w_sigma * sigma_x;
    p.w_sigma_wt = p.w_sigma_x * enc.w_mu.transpose();
    p.dtd = dec.d.transpose() * dec.d;
    const Index k = enc.latent_dim();
    p.e.resize(k);
    p.active.resize(k);
    for (Index i = 0; i < k; ++i) {
        const double exponent = 0.5 * p.v_sigma_x.row(i).dot(enc.w_sigma.row(i)) + enc.b_sigma(i);
        const bool hit = exponent > kExponentClamp;
        p.clamped = p.clamped || hit;
        p.e(i) = std::exp(hit ? kExponentClamp : exponent);
        p.active(i) = hit ? 0.0 : 1.0;
    }
    p.r = dec.d * enc.b_mu + dec.b_d;
    return p;
}

double value_from(const Pieces& p, const EncoderParams& enc, const DecoderParams& dec,
                  const Matrix& sigma_x, double beta) {
    const double recon_trace = (p.dtd.cwiseProduct(p.w_sigma_wt)).sum() -
                               2.0 * (dec.d.cwiseProduct(p.w_sigma_x.transpose())).sum() +
                               sigma_x.trace();
    const double mean_penalty = beta * p.w_sigma_wt.trace();
    const double variance_terms = ((p.dtd.diagonal().array() + beta) * p.e.array()).sum();
    const double bias_terms = p.r.squaredNorm() + beta * enc.b_mu.squaredNorm();
    return -0.5 * (recon_trace + mean_penalty + variance_terms + bias_terms - beta * enc.b_sigma.sum());
}

}  // namespace

EncoderParams EncoderParams::zeros(Index n, Index k) {
    return {Matrix::Zero(k, n), Vector::Zero(k), Matrix::Zero(k, n), Vector::Zero(k)};
}

DecoderParams DecoderParams::zeros(Index n, Index k) {
    return {Matrix::Zero(n, k), Vector::Zero(n), 1.0};
}

LinearParams LinearParams::zeros(Index n, Index k) {
    return {EncoderParams::zeros(n, k), DecoderParams::zeros(n, k)};
}

namespace {

Vector pack(const Matrix& w_mu, const Vector& b_mu, const Matrix& w_sigma, const Vector& b_sigma,
            const Matrix& d, const Vector& b_d) {
    Vector flat(LinearParams::flat_size(w_mu.cols(), w_mu.rows()));
    Index at = 0;
    auto put = [&](const auto& block) {
        flat.segment(at, block.size()) = block.reshaped();
        at += block.size();
    };
    put(w_mu);
    put(b_mu);
    put(w_sigma);
    put(b_sigma);
    put(d);
    put(b_d);
    return flat;
}

}  // namespace

Vector LinearParams::flatten() const {
    return pack(enc.w_mu, enc.b_mu, enc.w_sigma, enc.b_sigma, dec.d, dec.b_d);
}

LinearParams LinearParams::unflatten(const Vector& flat, Index n, Index k) {
    if (flat.size() != flat_size(n, k)) {
        throw std::invalid_argument("LinearParams::unflatten: size mismatch");
    }
    LinearParams p = zeros(n, k);
    Index at = 0;
    auto take = [&](auto& block) {
        block.reshaped() = flat.segment(at, block.size());
        at += block.size();
    };
    take(p.enc.w_mu);
    take(p.enc.b_mu);
    take(p.enc.w_sigma);
    take(p.enc.b_sigma);
    take(p.dec.d);
    take(p.dec.b_d);
    return p;
}

Vector LinearGradient::flatten() const { return pack(w_mu, b_mu, w_sigma, b_sigma, d, b_d); }

double LinearGradient::max_abs() const {
    return std::max({w_mu.cwiseAbs().maxCoeff(), b_mu.cwiseAbs().maxCoeff(),
                     w_sigma.cwiseAbs().maxCoeff(), b_sigma.cwiseAbs().maxCoeff(),
                     d.cwiseAbs().maxCoeff(), b_d.cwiseAbs().maxCoeff()});
}

void check_compatible(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x) {
    const Index n = enc.data_dim();
    const Index k = enc.latent_dim();
    const bool ok = enc.b_mu.size() == k && enc.w_sigma.rows() == k && enc.w_sigma.cols() == n &&
                    enc.b_sigma.size() == k && dec.d.rows() == n && dec.d.cols() == k &&
                    dec.b_d.size() == n && sigma_x.rows() == n && sigma_x.cols() == n;
    if (!ok) {
        throw std::invalid_argument("linear beta-VAE: parameter shapes are inconsistent");
    }
    if (dec.sigma_y_sq != 1.0) {
        throw std::invalid_argument("linear beta-VAE: only sigma_y^2 = 1 is supported");
    }
}

Vector expected_variances(const EncoderParams& enc, const Matrix& sigma_x, bool* clamped) {
    const Matrix v_sigma_x = enc.w_sigma * sigma_x;
    Vector e(enc.latent_dim());
    bool hit_any = false;
    for (Index i = 0; i < e.size(); ++i) {
        const double exponent = 0.5 * v_sigma_x.row(i).dot(enc.w_sigma.row(i)) + enc.b_sigma(i);
        hit_any = hit_any || exponent > kExponentClamp;
        e(i) = std::exp(std::min(exponent, kExponentClamp));
    }
    if (clamped != nullptr) {
        *clamped = hit_any;
    }
    return e;
}

double objective_paper(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x,
                       double beta) {
    return value_from(compute_pieces(enc, dec, sigma_x), enc, dec, sigma_x, beta);
}

double objective_offset(Index n, Index k, double beta) {
    return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) +
           0.5 * beta * static_cast<double>(k);
}

double objective_full(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x,
                      double beta) {
    return objective_paper(enc, dec, sigma_x, beta) +
           objective_offset(enc.data_dim(), enc.latent_dim(), beta);
}

Evaluation evaluate(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x,
                    double beta) {
    const Pieces p = compute_pieces(enc, dec, sigma_x);

    Evaluation out;
    out.value = value_from(p, enc, dec, sigma_x, beta);
    out.clamped = p.clamped;

    Matrix gram = p.dtd;
    gram.diagonal().array() += beta;
    const Vector weight = (p.dtd.diagonal().array() + beta) * p.e.array();

    auto& g = out.gradient;
    g.w_mu = -(gram * p.w_sigma_x - dec.d.transpose() * sigma_x);
    g.b_mu = -(dec.d.transpose() * p.r + beta * enc.b_mu);
    g.d = -(dec.d * p.w_sigma_wt - p.w_sigma_x.transpose() + dec.d * p.e.asDiagonal() +
            p.r * enc.b_mu.transpose());
    g.b_d = -p.r;
    g.w_sigma = -0.5 * (weight.array() * p.active.array()).matrix().asDiagonal() * p.v_sigma_x;
    g.b_sigma = -0.5 * ((weight.array() * p.active.array()) - beta).matrix();
    return out;
}

LinearGradient gradient(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x,
                        double beta) {
    return evaluate(enc, dec, sigma_x, beta).gradient;
}

double StationarityResidual::max() const {
    return std::max({mean_map, decoder, var_weight, var_bias});
}

double StationarityResidual::encoder_max() const {
    return std::max({mean_map, var_weight, var_bias});
}

StationarityResidual stationarity_residual(const EncoderParams& enc, const DecoderParams& dec,
                                           const Matrix& sigma_x, double beta) {
    const Pieces p = compute_pieces(enc, dec, sigma_x);
    Matrix gram = p.dtd;
    gram.diagonal().array() += beta;
    const Vector weight = (p.dtd.diagonal().array() + beta) * p.e.array();

    StationarityResidual res;
    res.mean_map = (gram * p.w_sigma_x - dec.d.transpose() * sigma_x).cwiseAbs().maxCoeff();
    res.decoder = (dec.d * p.w_sigma_wt - p.w_sigma_x.transpose() + dec.d * p.e.asDiagonal() +
                   p.r * enc.b_mu.transpose())
                      .cwiseAbs()
                      .maxCoeff();
    res.var_weight = (weight.asDiagonal() * p.v_sigma_x).cwiseAbs().maxCoeff();
    res.var_bias = (weight.array() - beta).abs().maxCoeff();
    return res;
}

EncoderParams optimal_encoder(const Matrix& d, double beta) {
    const Index n = d.rows();
    const Index k = d.cols();
    Matrix gram = d.transpose() * d;
    const Vector diag = gram.diagonal();
    gram.diagonal().array() += beta;
    EncoderParams enc = EncoderParams::zeros(n, k);
    enc.w_mu = gram.llt().solve(d.transpose());
    enc.b_sigma = (beta / (diag.array() + beta)).log().matrix();
    return enc;
}

double reduced_objective(const Matrix& d, const Matrix& sigma_x, double beta) {
    const Index k = d.cols();
    Matrix gram = d.transpose() * d;
    const Vector diag = gram.diagonal();
    gram.diagonal().array() += beta;
    const Matrix sd = sigma_x * d;
    const double explained = (gram.llt().solve(d.transpose() * sd)).trace();
    const double variance_penalty = beta * (1.0 + diag.array() / beta).log().sum();
    return -0.5 * (sigma_x.trace() - explained + beta * static_cast<double>(k) + variance_penalty);
}

Matrix reduced_gradient(const Matrix& d, const Matrix& sigma_x, double beta) {
    // Envelope theorem: the encoder blocks are stationary, so only the explicit
    // D-dependence of the objective survives.
    const EncoderParams enc = optimal_encoder(d, beta);
    const Matrix w_sigma_x = enc.w_mu * sigma_x;
    const Matrix w_sigma_wt = w_sigma_x * enc.w_mu.transpose();
    const Vector e = enc.b_sigma.array().exp().matrix();
    return -(d * w_sigma_wt - w_sigma_x.transpose() + d * e.asDiagonal());
}

Matrix SignedPermutation::matrix() const {
    const auto k = static_cast<Index>(perm.size());
    Matrix p = Matrix::Zero(k, k);
    for (Index i = 0; i < k; ++i) {
        p(perm[static_cast<std::size_t>(i)], i) = sign[static_cast<std::size_t>(i)];
    }
    return p;
}

std::vector<SignedPermutation> all_signed_permutations(Index k) {
    std::vector<SignedPermutation> out;
    std::vector<Index> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), Index{0});
    do {
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << k); ++mask) {
            SignedPermutation sp{perm, std::vector<int>(static_cast<std::size_t>(k), 1)};
            for (Index i = 0; i < k; ++i) {
                if ((mask >> i) & 1U) {
                    sp.sign[static_cast<std::size_t>(i)] = -1;
                }
            }
            out.push_back(std::move(sp));
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

SignedPermutation minimize_over_signed_permutations(Index k, const std::function<double(const Matrix&)>& cost,
                                                    double* value) {
    if (k < 1) {
        throw std::invalid_argument("minimize_over_signed_permutations: k must be >= 1");
    }
    double best_value = std::numeric_limits<double>::infinity();
    SignedPermutation best;

    if (k <= kExhaustiveSearchMaxK) {
        for (auto& sp : all_signed_permutations(k)) {
            const double v = cost(sp.matrix());
            if (v < best_value) {
                best_value = v;
                best = std::move(sp);
            }
        }
    } else {
        best.perm.resize(static_cast<std::size_t>(k));
        std::iota(best.perm.begin(), best.perm.end(), Index{0});
        best.sign.assign(static_cast<std::size_t>(k), 1);
        best_value = cost(best.matrix());
        for (bool improved = true; improved;) {
            improved = false;
            for (std::size_t i = 0; i < best.perm.size(); ++i) {
                for (std::size_t j = i; j < best.perm.size(); ++j) {
                    SignedPermutation trial = best;
                    if (i == j) {
                        trial.sign[i] = -trial.sign[i];
                    } else {
                        std::swap(trial.perm[i], trial.perm[j]);
                        std::swap(trial.sign[i], trial.sign[j]);
                    }
                    const double v = cost(trial.matrix());
                    if (v < best_value - 1e-15 * (1.0 + std::abs(best_value))) {
                        best_value = v;
                        best = std::move(trial);
                        improved = true;
                    }
                }
            }
        }
    }
    if (value != nullptr) {
        *value = best_value;
    }
    return best;
}

EncoderParams relabel(const EncoderParams& enc, const SignedPermutation& p) {
    const Matrix pm = p.matrix();
    const Matrix abs_pm = pm.cwiseAbs();
    return {pm.transpose() * enc.w_mu, pm.transpose() * enc.b_mu, abs_pm.transpose() * enc.w_sigma,
            abs_pm.transpose() * enc.b_sigma};
}

DecoderParams relabel(const DecoderParams& dec, const SignedPermutation& p) {
    return {dec.d * p.matrix(), dec.b_d, dec.sigma_y_sq};
}

}  // namespace bvae
