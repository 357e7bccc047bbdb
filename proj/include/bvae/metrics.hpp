#pragma once

#include "bvae/generative.hpp"
#include "bvae/linear_bvae.hpp"

namespace bvae {

/// Biases must be this close to zero for the closed forms that assume them.
inline constexpr double kBiasTolerance = 1e-6;

/// Data-averaged, constant-complete ELBO decomposition.
struct ElboTerms {
    double reconstruction = 0.0;   // E_p(x) E_q [ln p(x|z)]
    double cond_indep_loss = 0.0;  // E_p(x) KL(q(z|x) || p(z))
    double elbo = 0.0;             // reconstruction - cond_indep_loss
};

/// Posterior of the linear decoder with a standard-normal prior:
/// F = (D^T D + I)^{-1} D^T, E = (D^T D + I)^{-1}. Requires b_D = 0.
LinearPosterior model_posterior(const DecoderParams& dec);

/// E_p(x) KL(q(z|x) || N(F x, E)) for x ~ N(0, Sigma_x). With the model posterior
/// this is MIE; with the ground-truth posterior it is TIE. Requires b_mu = 0.
double inference_error(const EncoderParams& enc, const LinearPosterior& posterior, const Matrix& sigma_x);

/// inference_error minimized over signed permutations of the encoder's latent axes.
/// The linear beta-VAE fixes its latents only up to that symmetry while a
/// ground-truth posterior has fixed source labels, so this is the TIE reported
/// in sweeps. `best` (optional) receives the minimizing relabeling.
double aligned_inference_error(const EncoderParams& enc, const LinearPosterior& posterior,
                               const Matrix& sigma_x, SignedPermutation* best = nullptr);

/// E_{x ~ N(0, Sigma_x)} ln N(x; 0, D D^T + I). Requires b_D = 0.
double data_log_likelihood(const DecoderParams& dec, const Matrix& sigma_x);

ElboTerms elbo_terms(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x);

/// MIE through the evidence identity: data_log_likelihood - elbo.
double mie_via_identity(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x);

}  // namespace bvae
