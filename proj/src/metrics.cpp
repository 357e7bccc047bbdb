#include "bvae/metrics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bvae {

namespace {

void require_zero(const Vector& bias, const char* what) {
    if (bias.size() > 0 && bias.cwiseAbs().maxCoeff() > kBiasTolerance) {
        throw std::invalid_argument(std::string(what) + " must be zero (within 1e-6) for this closed form");
    }
}

// Pieces of the inference error that do not change under a relabeling of the
// encoder's latents, plus k x k moments from which each relabeling is assembled.
struct InferenceErrorTerms {
    Matrix e_inv;
    double log_det_e = 0.0;
    Matrix f_sigma_ft;  // F Sigma F^T
    Matrix f_sigma_wt;  // F Sigma W^T
    Matrix w_sigma_wt;  // W Sigma W^T
    Vector variances;   // E_x exp(W_sigma x + b_sigma)
    Vector b_sigma;
};

InferenceErrorTerms prepare(const EncoderParams& enc, const LinearPosterior& posterior, const Matrix& sigma_x) {
    const Index k = enc.latent_dim();
    if (posterior.mean_map().rows() != k || posterior.mean_map().cols() != enc.data_dim() ||
        sigma_x.rows() != enc.data_dim() || sigma_x.cols() != enc.data_dim()) {
        throw std::invalid_argument("inference_error: incompatible shapes");
    }
    require_zero(enc.b_mu, "encoder b_mu");
    InferenceErrorTerms t;
    const Eigen::LLT<Matrix> llt(posterior.cov());
    t.e_inv = llt.solve(Matrix::Identity(k, k));
    t.log_det_e = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const Matrix f_sigma = posterior.mean_map() * sigma_x;
    t.f_sigma_ft = f_sigma * posterior.mean_map().transpose();
    t.f_sigma_wt = f_sigma * enc.w_mu.transpose();
    t.w_sigma_wt = enc.w_mu * sigma_x * enc.w_mu.transpose();
    t.variances = expected_variances(enc, sigma_x);
    t.b_sigma = enc.b_sigma;
    return t;
}

double assemble(const InferenceErrorTerms& t, const Matrix& p) {
    // Relabeled encoder: W' = P^T W, variances' = |P|^T variances, b_sigma' = |P|^T b_sigma.
    const Matrix abs_p = p.cwiseAbs();
    const Vector variances = abs_p.transpose() * t.variances;
    const Matrix cross = t.f_sigma_wt * p;  // F Sigma W'^T
    const Matrix gap = t.f_sigma_ft - cross - cross.transpose() + p.transpose() * t.w_sigma_wt * p;
    const auto k = static_cast<double>(t.b_sigma.size());
    return 0.5 * (t.e_inv.diagonal().dot(variances) - t.b_sigma.sum() + t.log_det_e +
                  t.e_inv.cwiseProduct(gap).sum() - k);
}

}  // namespace

LinearPosterior model_posterior(const DecoderParams& dec) {
    require_zero(dec.b_d, "decoder b_D");
    const Index k = dec.d.cols();
    Matrix precision = dec.d.transpose() * dec.d;
    precision.diagonal().array() += 1.0;
    const Eigen::LLT<Matrix> llt(precision);
    return {llt.solve(dec.d.transpose()), llt.solve(Matrix::Identity(k, k))};
}

double inference_error(const EncoderParams& enc, const LinearPosterior& posterior, const Matrix& sigma_x) {
    const auto terms = prepare(enc, posterior, sigma_x);
    return assemble(terms, Matrix::Identity(enc.latent_dim(), enc.latent_dim()));
}

double aligned_inference_error(const EncoderParams& enc, const LinearPosterior& posterior,
                               const Matrix& sigma_x, SignedPermutation* best) {
    const auto terms = prepare(enc, posterior, sigma_x);
    double value = 0.0;
    SignedPermutation p = minimize_over_signed_permutations(
        enc.latent_dim(), [&](const Matrix& pm) { return assemble(terms, pm); }, &value);
    if (best != nullptr) {
        *best = std::move(p);
    }
    return value;
}

double data_log_likelihood(const DecoderParams& dec, const Matrix& sigma_x) {
    require_zero(dec.b_d, "decoder b_D");
    const Index n = dec.d.rows();
    if (sigma_x.rows() != n || sigma_x.cols() != n) {
        throw std::invalid_argument("data_log_likelihood: incompatible shapes");
    }
    // Push-through: det(D D^T + I_N) = det(I_k + D^T D) and
    // (D D^T + I_N)^{-1} = I_N - D (I_k + D^T D)^{-1} D^T.
    Matrix small = dec.d.transpose() * dec.d;
    small.diagonal().array() += 1.0;
    const Eigen::LLT<Matrix> llt(small);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double trace = sigma_x.trace() - llt.solve(dec.d.transpose() * sigma_x * dec.d).trace();
    return -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + log_det + trace);
}

ElboTerms elbo_terms(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x) {
    check_compatible(enc, dec, sigma_x);
    const Index n = enc.data_dim();
    const auto k = static_cast<double>(enc.latent_dim());
    const Vector e = expected_variances(enc, sigma_x);
    const Matrix dtd = dec.d.transpose() * dec.d;
    const Matrix w_sigma = enc.w_mu * sigma_x;

    // E||(D W - I) x + r||^2 with r = D b_mu + b_D, expanded so nothing N x N is formed
    // beyond Sigma_x itself.
    const Matrix w_sigma_wt = w_sigma * enc.w_mu.transpose();
    const double residual = (dec.d * w_sigma_wt * dec.d.transpose()).trace() -
                            2.0 * (dec.d * w_sigma).trace() + sigma_x.trace() +
                            (dec.d * enc.b_mu + dec.b_d).squaredNorm();
    const double spread = dtd.diagonal().dot(e);

    ElboTerms t;
    t.reconstruction = -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) -
                       0.5 * (residual + spread);
    t.cond_indep_loss = 0.5 * (e.sum() + w_sigma_wt.trace() +
                               enc.b_mu.squaredNorm() - k - enc.b_sigma.sum());
    t.elbo = t.reconstruction - t.cond_indep_loss;
    return t;
}

double mie_via_identity(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x) {
    require_zero(enc.b_mu, "encoder b_mu");
    return data_log_likelihood(dec, sigma_x) - elbo_terms(enc, dec, sigma_x).elbo;
}

}  // namespace bvae
