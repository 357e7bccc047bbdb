#pragma once

#include <functional>
#include <vector>

#include "bvae/gaussian.hpp"

namespace bvae {

/// Exponents of the data-averaged encoder variances are clamped here to keep
/// early iterates finite.
inline constexpr double kExponentClamp = 40.0;

/// Linear encoder: mu_z = W_mu x + b_mu, Sigma_z = diag(exp(W_sigma x + b_sigma)).
struct EncoderParams {
    Matrix w_mu;     // k x N
    Vector b_mu;     // k
    Matrix w_sigma;  // k x N
    Vector b_sigma;  // k

    static EncoderParams zeros(Index n, Index k);
    Index data_dim() const { return w_mu.cols(); }
    Index latent_dim() const { return w_mu.rows(); }
};

/// Linear decoder: x | z ~ N(D z + b_D, sigma_y^2 I_N). Only sigma_y^2 = 1 is supported.
struct DecoderParams {
    Matrix d;    // N x k
    Vector b_d;  // N
    double sigma_y_sq = 1.0;

    static DecoderParams zeros(Index n, Index k);
};

struct LinearParams {
    EncoderParams enc;
    DecoderParams dec;

    static LinearParams zeros(Index n, Index k);
    Index data_dim() const { return enc.data_dim(); }
    Index latent_dim() const { return enc.latent_dim(); }

    /// Packs the six blocks (W_mu, b_mu, W_sigma, b_sigma, D, b_D) column-major.
    Vector flatten() const;
    static LinearParams unflatten(const Vector& flat, Index n, Index k);
    static Index flat_size(Index n, Index k) { return 2 * k * n + 2 * k + n * k + n; }
};

/// Same block layout as LinearParams.
struct LinearGradient {
    Matrix w_mu;
    Vector b_mu;
    Matrix w_sigma;
    Vector b_sigma;
    Matrix d;
    Vector b_d;

    Vector flatten() const;
    double max_abs() const;
};

/// Throws unless shapes agree, Sigma_x is square N x N and sigma_y^2 == 1.
void check_compatible(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x);

/// exp(0.5 [W_sigma Sigma_x W_sigma^T]_ii + b_sigma_i) with the exponent clamp.
/// `clamped` is set when any exponent hit the clamp.
Vector expected_variances(const EncoderParams& enc, const Matrix& sigma_x, bool* clamped = nullptr);

/// Data-integrated beta-VAE objective with constants dropped (the five-term form).
double objective_paper(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x,
                       double beta);

/// Constant-complete data-averaged objective E[recon] - beta E[KL(q || prior)].
double objective_full(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x,
                      double beta);

/// objective_full - objective_paper; independent of the parameters.
double objective_offset(Index n, Index k, double beta);

struct Evaluation {
    double value = 0.0;
    LinearGradient gradient;
    bool clamped = false;
};

/// objective_paper and its analytic gradient in one pass.
Evaluation evaluate(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x,
                    double beta);

LinearGradient gradient(const EncoderParams& enc, const DecoderParams& dec, const Matrix& sigma_x,
                        double beta);

/// Max-abs residual of each stationarity line:
///   mean_map:   [(D^T(D W_mu - I) + beta W_mu) Sigma_x]
///   decoder:    [(D W_mu - I) Sigma_x W_mu^T + (D b_mu + b_D) b_mu^T + D diag(e)]
///   var_weight: (d_a + beta) e_a [W_sigma Sigma_x]_ab
///   var_bias:   (d_a + beta) e_a - beta
/// with d_a = [D^T D]_aa and e the expected encoder variances.
struct StationarityResidual {
    double mean_map = 0.0;
    double decoder = 0.0;
    double var_weight = 0.0;
    double var_bias = 0.0;

    double max() const;
    double encoder_max() const;
};

StationarityResidual stationarity_residual(const EncoderParams& enc, const DecoderParams& dec,
                                           const Matrix& sigma_x, double beta);

/// Encoder that maximizes the objective for a fixed decoder D (with b_D = 0):
/// W_mu = (D^T D + beta I)^{-1} D^T, W_sigma = 0, b_sigma_i = ln(beta / ([D^T D]_ii + beta)).
EncoderParams optimal_encoder(const Matrix& d, double beta);

/// objective_paper with the encoder eliminated, as a function of D alone.
double reduced_objective(const Matrix& d, const Matrix& sigma_x, double beta);

/// Gradient of reduced_objective with respect to D.
Matrix reduced_gradient(const Matrix& d, const Matrix& sigma_x, double beta);

/// A signed permutation of the k latent axes: latent i of the transformed model
/// is sign[i] * latent perm[i] of the original.
struct SignedPermutation {
    std::vector<Index> perm;
    std::vector<int> sign;

    Matrix matrix() const;  // P with P(perm[i], i) = sign[i]
};

/// All 2^k k! signed permutations.
std::vector<SignedPermutation> all_signed_permutations(Index k);

/// Largest k searched exhaustively by minimize_over_signed_permutations.
inline constexpr Index kExhaustiveSearchMaxK = 6;

/// Signed permutation minimizing cost(P). Exhaustive up to kExhaustiveSearchMaxK;
/// beyond that a descent over sign flips and transpositions from the identity,
/// which may stop at a local minimum. `value` (optional) receives the minimum.
SignedPermutation minimize_over_signed_permutations(Index k, const std::function<double(const Matrix&)>& cost,
                                                    double* value = nullptr);

/// Relabels latents: (D, W_mu, b_mu, W_sigma, b_sigma) -> (D P, P^T W_mu, P^T b_mu, |P|^T W_sigma, |P|^T b_sigma).
EncoderParams relabel(const EncoderParams& enc, const SignedPermutation& p);
DecoderParams relabel(const DecoderParams& dec, const SignedPermutation& p);

}  // namespace bvae
