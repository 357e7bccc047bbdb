#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bvae/generative.hpp"
#include "bvae/linear_bvae.hpp"

namespace bvae {

enum class Activation { Tanh, Identity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct MlpSpec {
    std::vector<Index> encoder_hidden{256, 200, 200};
    std::vector<Index> decoder_hidden{200, 200, 256};
    Index latent_dim = 2;
    Index data_dim = 2;
    Activation activation = Activation::Tanh;

    void validate() const;
};

struct TrainConfig {
    double beta = 1.0;
    Index epochs = 1000;
    double learning_rate = 1e-3;
    Index batch_size = 1000;  // clipped to n_examples; equal means full batch
    Index n_examples = 1000;
    std::uint64_t seed = 0;
    bool zero_init_heads = false;

    void validate() const;
};

struct DenseLayer {
    Matrix w;  // out x in
    Vector b;
};

/// Per-example averages over a batch. objective = reconstruction - beta * kl and
/// elbo = reconstruction - kl; reconstruction keeps the -(N/2) ln 2 pi constant.
struct BatchTerms {
    double reconstruction = 0.0;
    double kl = 0.0;
    double elbo = 0.0;
    double objective = 0.0;
};

struct Encoding {
    Matrix mean;     // k x B
    Matrix log_var;  // k x B
};

/// MLP encoder with mean and log-variance heads on the last hidden layer, MLP
/// decoder with a linear output and unit-variance Gaussian likelihood.
class NeuralVae {
public:
    /// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), one counter stream per layer.
    /// zero_init_heads zeroes both encoder heads and the decoder output layer.
    NeuralVae(MlpSpec spec, std::uint64_t seed, bool zero_init_heads = false);

    /// Network without hidden layers carrying the linear model's parameters.
    static NeuralVae from_linear(const LinearParams& params);

    const MlpSpec& spec() const { return spec_; }

    // Layer order: encoder hidden, mean head, log-variance head, decoder hidden, output.
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    Index parameter_count() const;
    Vector flatten() const;
    void assign(const Vector& flat);

    /// Columns of x are examples.
    Encoding encode(const Matrix& x) const;
    Matrix decode(const Matrix& z) const;

    /// Sampled objective on a batch with z = mean + exp(log_var / 2) * eps. When
    /// `gradient` is given it receives d objective / d parameters, layer by layer.
    BatchTerms evaluate(const Matrix& x, const Matrix& eps, double beta,
                        std::vector<DenseLayer>* gradient = nullptr) const;

private:
    Index head_index() const { return static_cast<Index>(spec_.encoder_hidden.size()); }

    MlpSpec spec_;
    std::vector<DenseLayer> layers_;
};

Vector flatten_layers(const std::vector<DenseLayer>& layers);

struct EpochLog {
    Index epoch = 0;
    double reconstruction = 0.0;
    double cond_indep_loss = 0.0;
    double elbo = 0.0;
    double objective = 0.0;
};

class TrainingDiverged : public std::runtime_error {
public:
    explicit TrainingDiverged(Index epoch)
        : std::runtime_error("neural training diverged (non-finite loss) at epoch " + std::to_string(epoch)),
          epoch_(epoch) {}

    Index epoch() const { return epoch_; }

private:
    Index epoch_;
};

struct TrainResult {
    NeuralVae network;
    std::vector<EpochLog> log;
};

/// x holds one example per row; only the first cfg.n_examples rows are used.
TrainResult train(const MlpSpec& spec, const TrainConfig& cfg, const Matrix& x);

struct TieEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    SignedPermutation alignment;  // applied to the encoder's latents before comparing
};

/// Average over fresh x ~ p(x) of KL(q(z|x) || N(F x, E)) against the ground-truth
/// posterior. With `align` the encoder's latents are first relabeled by the signed
/// permutation that minimizes the average.
TieEstimate estimate_tie(const NeuralVae& network, const GroundTruthModel& model, Index n_samples,
                         std::uint64_t seed, bool align = true);

/// Rows are decoder outputs with latent `unit` set to each of `values` and the
/// others held at the encoded mean of base_x.
Matrix latent_traversal(const NeuralVae& network, const Vector& base_x, Index unit, const std::vector<double>& values);

/// Tiles each row of `images` (reshaped row-major to height x width) left to right
/// into a binary PGM, grey levels min-max scaled over the whole grid. Each pixel is
/// drawn as a scale x scale block.
void write_pgm_grid(const std::string& path, const Matrix& images, Index height, Index width, Index scale = 1);

void save_network(const NeuralVae& network, const std::string& path);
NeuralVae load_network(const std::string& path);

}  // namespace bvae
