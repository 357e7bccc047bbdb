#include "bvae/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "json.hpp"

#include "bvae/rng.hpp"

namespace bvae {

namespace {

constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kNoiseTag = 0xE95;
constexpr std::uint64_t kShuffleTag = 0x5F1E;
constexpr const char* kFormat = "bvae-neural-v1";

DenseLayer uniform_layer(Index out, Index in, std::uint64_t seed, Index layer, bool zero) {
    DenseLayer l{Matrix::Zero(out, in), Vector::Zero(out)};
    if (zero) {
        return l;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const CounterStream rng(seed, static_cast<std::uint64_t>(layer));
    std::uint64_t idx = 0;
    for (Index j = 0; j < in; ++j) {
        for (Index i = 0; i < out; ++i) {
            l.w(i, j) = bound * (2.0 * rng.uniform(idx++) - 1.0);
        }
    }
    for (Index i = 0; i < out; ++i) {
        l.b(i) = bound * (2.0 * rng.uniform(idx++) - 1.0);
    }
    return l;
}

Matrix affine(const DenseLayer& l, const Matrix& in) {
    return (l.w * in).colwise() + l.b;
}

Matrix activate(Activation a, Matrix m) {
    if (a == Activation::Tanh) {
        m = m.array().tanh().matrix();
    }
    return m;
}

// Multiplies an upstream gradient by the activation derivative, given the activation output.
void backprop_activation(Activation a, const Matrix& out, Matrix& grad) {
    if (a == Activation::Tanh) {
        grad.array() *= 1.0 - out.array().square();
    }
}

// Accumulates the layer gradient and returns the gradient with respect to its input.
Matrix backprop_affine(const DenseLayer& l, const Matrix& in, const Matrix& grad_out, DenseLayer& g) {
    g.w = grad_out * in.transpose();
    g.b = grad_out.rowwise().sum();
    return l.w.transpose() * grad_out;
}

std::vector<DenseLayer> zeros_like(const std::vector<DenseLayer>& layers) {
    std::vector<DenseLayer> out;
    out.reserve(layers.size());
    for (const auto& l : layers) {
        out.push_back({Matrix::Zero(l.w.rows(), l.w.cols()), Vector::Zero(l.b.size())});
    }
    return out;
}

class Adam {
public:
    Adam(const std::vector<DenseLayer>& shape, double lr) : m_(zeros_like(shape)), v_(zeros_like(shape)), lr_(lr) {}

    // Ascent step on `params` along `grad`.
    void step(std::vector<DenseLayer>& params, const std::vector<DenseLayer>& grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            update(params[i].w, grad[i].w, m_[i].w, v_[i].w, c1, c2);
            update(params[i].b, grad[i].b, m_[i].b, v_[i].b, c1, c2);
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    template <typename T>
    void update(T& p, const T& g, T& m, T& v, double c1, double c2) const {
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
        p.array() += lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
    }

    std::vector<DenseLayer> m_;
    std::vector<DenseLayer> v_;
    double lr_;
    long t_ = 0;
};

nlohmann::json matrix_to_json(const Matrix& m) {
    return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()},
                          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
        throw std::runtime_error("network file: matrix size mismatch");
    }
    return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

}  // namespace

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation '" + name + "' (expected tanh or identity)");
}

std::string to_string(Activation a) {
    return a == Activation::Tanh ? "tanh" : "identity";
}

void MlpSpec::validate() const {
    if (latent_dim < 1) throw std::invalid_argument("neural.k: must be >= 1");
    if (data_dim < 1) throw std::invalid_argument("neural.N: must be >= 1");
    for (const Index w : encoder_hidden) {
        if (w < 1) throw std::invalid_argument("neural.encoder_hidden: widths must be >= 1");
    }
    for (const Index w : decoder_hidden) {
        if (w < 1) throw std::invalid_argument("neural.decoder_hidden: widths must be >= 1");
    }
}

void TrainConfig::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("neural.beta: must be > 0");
    if (epochs < 1) throw std::invalid_argument("neural.epochs: must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("neural.learning_rate: must be > 0");
    if (batch_size < 1) throw std::invalid_argument("neural.batch_size: must be >= 1");
    if (n_examples < 1) throw std::invalid_argument("neural.n_examples: must be >= 1");
}

NeuralVae::NeuralVae(MlpSpec spec, std::uint64_t seed, bool zero_init_heads) : spec_(std::move(spec)) {
    spec_.validate();
    const std::uint64_t init_seed = derive_seed(seed, kInitTag);
    Index layer = 0;
    Index in = spec_.data_dim;
    for (const Index w : spec_.encoder_hidden) {
        layers_.push_back(uniform_layer(w, in, init_seed, layer++, false));
        in = w;
    }
    layers_.push_back(uniform_layer(spec_.latent_dim, in, init_seed, layer++, zero_init_heads));
    layers_.push_back(uniform_layer(spec_.latent_dim, in, init_seed, layer++, zero_init_heads));
    in = spec_.latent_dim;
    for (const Index w : spec_.decoder_hidden) {
        layers_.push_back(uniform_layer(w, in, init_seed, layer++, false));
        in = w;
    }
    layers_.push_back(uniform_layer(spec_.data_dim, in, init_seed, layer++, zero_init_heads));
}

NeuralVae NeuralVae::from_linear(const LinearParams& params) {
    MlpSpec spec;
    spec.encoder_hidden.clear();
    spec.decoder_hidden.clear();
    spec.latent_dim = params.latent_dim();
    spec.data_dim = params.data_dim();
    spec.activation = Activation::Identity;
    NeuralVae net(spec, 0, true);
    net.layers_[0] = {params.enc.w_mu, params.enc.b_mu};
    net.layers_[1] = {params.enc.w_sigma, params.enc.b_sigma};
    net.layers_[2] = {params.dec.d, params.dec.b_d};
    return net;
}

Index NeuralVae::parameter_count() const {
    Index n = 0;
    for (const auto& l : layers_) n += l.w.size() + l.b.size();
    return n;
}

Vector flatten_layers(const std::vector<DenseLayer>& layers) {
    Index n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    Vector out(n);
    Index pos = 0;
    for (const auto& l : layers) {
        out.segment(pos, l.w.size()) = l.w.reshaped();
        pos += l.w.size();
        out.segment(pos, l.b.size()) = l.b;
        pos += l.b.size();
    }
    return out;
}

Vector NeuralVae::flatten() const {
    return flatten_layers(layers_);
}

void NeuralVae::assign(const Vector& flat) {
    if (flat.size() != parameter_count()) {
        throw std::invalid_argument("NeuralVae::assign: expected " + std::to_string(parameter_count()) +
                                    " parameters, got " + std::to_string(flat.size()));
    }
    Index pos = 0;
    for (auto& l : layers_) {
        l.w.reshaped() = flat.segment(pos, l.w.size());
        pos += l.w.size();
        l.b = flat.segment(pos, l.b.size());
        pos += l.b.size();
    }
}

Encoding NeuralVae::encode(const Matrix& x) const {
    Matrix h = x;
    const Index heads = head_index();
    for (Index i = 0; i < heads; ++i) {
        h = activate(spec_.activation, affine(layers_[static_cast<std::size_t>(i)], h));
    }
    return {affine(layers_[static_cast<std::size_t>(heads)], h), affine(layers_[static_cast<std::size_t>(heads + 1)], h)};
}

Matrix NeuralVae::decode(const Matrix& z) const {
    Matrix g = z;
    for (std::size_t i = static_cast<std::size_t>(head_index()) + 2; i + 1 < layers_.size(); ++i) {
        g = activate(spec_.activation, affine(layers_[i], g));
    }
    return affine(layers_.back(), g);
}

BatchTerms NeuralVae::evaluate(const Matrix& x, const Matrix& eps, double beta,
                               std::vector<DenseLayer>* gradient) const {
    const Index batch = x.cols();
    if (x.rows() != spec_.data_dim || eps.rows() != spec_.latent_dim || eps.cols() != batch || batch < 1) {
        throw std::invalid_argument("NeuralVae::evaluate: incompatible batch shapes");
    }
    const auto heads = static_cast<std::size_t>(head_index());
    const Activation act = spec_.activation;

    // Forward pass, keeping every layer input.
    std::vector<Matrix> enc_in{x};
    for (std::size_t i = 0; i < heads; ++i) {
        enc_in.push_back(activate(act, affine(layers_[i], enc_in.back())));
    }
    const Matrix& top = enc_in.back();
    const Matrix mean = affine(layers_[heads], top);
    const Matrix log_var = affine(layers_[heads + 1], top);
    const Matrix sd = (0.5 * log_var.array()).exp().matrix();
    std::vector<Matrix> dec_in{mean + sd.cwiseProduct(eps)};
    for (std::size_t i = heads + 2; i + 1 < layers_.size(); ++i) {
        dec_in.push_back(activate(act, affine(layers_[i], dec_in.back())));
    }
    const Matrix residual = x - affine(layers_.back(), dec_in.back());

    const double n = static_cast<double>(spec_.data_dim);
    const double inv_batch = 1.0 / static_cast<double>(batch);
    const double log_norm = -0.5 * n * std::log(2.0 * std::numbers::pi);
    const Matrix var = log_var.array().exp().matrix();

    BatchTerms t;
    t.reconstruction = log_norm - 0.5 * residual.squaredNorm() * inv_batch;
    t.kl = 0.5 * (var.array() + mean.array().square() - 1.0 - log_var.array()).sum() * inv_batch;
    t.elbo = t.reconstruction - t.kl;
    t.objective = t.reconstruction - beta * t.kl;

    if (gradient == nullptr) {
        return t;
    }
    auto& g = *gradient;
    g.resize(layers_.size());

    Matrix up = residual * inv_batch;  // d objective / d output
    up = backprop_affine(layers_.back(), dec_in.back(), up, g.back());
    for (std::size_t i = layers_.size() - 2; i >= heads + 2; --i) {
        backprop_activation(act, dec_in[i - heads - 1], up);
        up = backprop_affine(layers_[i], dec_in[i - heads - 2], up, g[i]);
    }
    // up is now d objective / dz.
    const Matrix d_mean = up - (beta * inv_batch) * mean;
    const Matrix d_log_var =
        (0.5 * up.array() * eps.array() * sd.array() - (0.5 * beta * inv_batch) * (var.array() - 1.0)).matrix();
    up = backprop_affine(layers_[heads], top, d_mean, g[heads]);
    up += backprop_affine(layers_[heads + 1], top, d_log_var, g[heads + 1]);
    for (std::size_t i = heads; i-- > 0;) {
        backprop_activation(act, enc_in[i + 1], up);
        up = backprop_affine(layers_[i], enc_in[i], up, g[i]);
    }
    return t;
}

TrainResult train(const MlpSpec& spec, const TrainConfig& cfg, const Matrix& x) {
    spec.validate();
    cfg.validate();
    if (x.cols() != spec.data_dim) {
        throw std::invalid_argument("train: data has " + std::to_string(x.cols()) + " columns, network expects " +
                                    std::to_string(spec.data_dim));
    }
    if (x.rows() < cfg.n_examples) {
        throw std::invalid_argument("train: dataset has fewer rows than n_examples");
    }
    const Index n = cfg.n_examples;
    const Index k = spec.latent_dim;
    const Index batch = std::min(cfg.batch_size, n);
    const Matrix data = x.topRows(n).transpose();

    TrainResult result{NeuralVae(spec, cfg.seed, cfg.zero_init_heads), {}};
    NeuralVae& net = result.network;
    Adam adam(net.layers(), cfg.learning_rate);
    std::vector<DenseLayer> grad;
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const std::uint64_t noise_seed = derive_seed(cfg.seed, kNoiseTag);
    const std::uint64_t shuffle_seed = derive_seed(cfg.seed, kShuffleTag);

    Matrix xb;
    Matrix eps;
    for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto e = static_cast<std::uint64_t>(epoch);
        if (batch < n) {
            const CounterStream shuffle(shuffle_seed, e);
            for (Index i = n - 1; i > 0; --i) {
                const auto j = std::min(i, static_cast<Index>(shuffle.uniform(static_cast<std::uint64_t>(i)) *
                                                              static_cast<double>(i + 1)));
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
            }
        }
        const CounterStream noise(noise_seed, e);
        EpochLog log;
        log.epoch = epoch + 1;
        for (Index start = 0; start < n; start += batch) {
            const Index b = std::min(batch, n - start);
            xb.resize(spec.data_dim, b);
            eps.resize(k, b);
            for (Index c = 0; c < b; ++c) {
                xb.col(c) = data.col(order[static_cast<std::size_t>(start + c)]);
                for (Index i = 0; i < k; ++i) {
                    eps(i, c) = noise.normal(static_cast<std::uint64_t>((start + c) * k + i));
                }
            }
            const BatchTerms t = net.evaluate(xb, eps, cfg.beta, &grad);
            if (!std::isfinite(t.objective)) {
                throw TrainingDiverged(epoch);
            }
            const double w = static_cast<double>(b) / static_cast<double>(n);
            log.reconstruction += w * t.reconstruction;
            log.cond_indep_loss += w * t.kl;
            log.objective += w * t.objective;
            adam.step(net.layers(), grad);
        }
        log.elbo = log.reconstruction - log.cond_indep_loss;
        result.log.push_back(log);
    }
    return result;
}

TieEstimate estimate_tie(const NeuralVae& network, const GroundTruthModel& model, Index n_samples,
                         std::uint64_t seed, bool align) {
    if (n_samples < 2) {
        throw std::invalid_argument("estimate_tie: need at least 2 samples");
    }
    const Index k = model.latent_dim();
    if (network.spec().latent_dim != k || network.spec().data_dim != model.data_dim()) {
        throw std::invalid_argument("estimate_tie: network and model dimensions differ");
    }
    const Matrix x = sample_data(model, n_samples, seed).x.transpose();
    const LinearPosterior post = ground_truth_posterior(model);
    const Eigen::LLT<Matrix> llt(post.cov());
    const Matrix e_inv = llt.solve(Matrix::Identity(k, k));
    const double log_det_e = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

    const Encoding enc = network.encode(x);
    const Matrix var = enc.log_var.array().exp().matrix();
    const Matrix target = post.mean_map() * x;
    const double inv_n = 1.0 / static_cast<double>(n_samples);
    const Vector log_var_sum = enc.log_var.colwise().sum().transpose();

    TieEstimate out;
    if (align) {
        const Matrix s_ff = target * target.transpose() * inv_n;
        const Matrix s_fm = target * enc.mean.transpose() * inv_n;
        const Matrix s_mm = enc.mean * enc.mean.transpose() * inv_n;
        const Vector var_mean = var.rowwise().mean();
        const double const_part = log_det_e - static_cast<double>(k) - log_var_sum.mean();
        auto cost = [&](const Matrix& p) {
            const Matrix cross = s_fm * p;
            const Matrix m = s_ff - cross - cross.transpose() + p.transpose() * s_mm * p;
            return 0.5 * (e_inv.diagonal().dot(p.cwiseAbs().transpose() * var_mean) + e_inv.cwiseProduct(m).sum() +
                          const_part);
        };
        out.alignment = minimize_over_signed_permutations(k, cost);
    } else {
        out.alignment.perm.resize(static_cast<std::size_t>(k));
        std::iota(out.alignment.perm.begin(), out.alignment.perm.end(), Index{0});
        out.alignment.sign.assign(static_cast<std::size_t>(k), 1);
    }

    const Matrix p = out.alignment.matrix();
    const Matrix diff = target - p.transpose() * enc.mean;
    const Matrix var_p = p.cwiseAbs().transpose() * var;
    const Vector kl = 0.5 * ((e_inv.diagonal().transpose() * var_p).transpose() +
                             diff.cwiseProduct(e_inv * diff).colwise().sum().transpose() - log_var_sum)
                                .array() +
                      0.5 * (log_det_e - static_cast<double>(k));
    out.mean = kl.mean();
    const double var_kl = (kl.array() - out.mean).square().sum() / static_cast<double>(n_samples - 1);
    out.std_error = std::sqrt(var_kl * inv_n);
    return out;
}

Matrix latent_traversal(const NeuralVae& network, const Vector& base_x, Index unit, const std::vector<double>& values) {
    const Index k = network.spec().latent_dim;
    if (unit < 0 || unit >= k) {
        throw std::invalid_argument("latent_traversal: unit index " + std::to_string(unit) + " out of range");
    }
    const Vector mean = network.encode(base_x).mean.col(0);
    Matrix z = mean.replicate(1, static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
        z(unit, static_cast<Index>(i)) = values[i];
    }
    return network.decode(z).transpose();
}

void write_pgm_grid(const std::string& path, const Matrix& images, Index height, Index width, Index scale) {
    if (height < 1 || width < 1 || scale < 1 || images.cols() != height * width || images.rows() < 1) {
        throw std::invalid_argument("write_pgm_grid: images must have height * width columns");
    }
    const Index gap = scale;
    const Index tiles = images.rows();
    const Index out_w = tiles * width * scale + (tiles - 1) * gap;
    const Index out_h = height * scale;
    const double lo = images.minCoeff();
    const double hi = images.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;

    std::vector<unsigned char> pixels(static_cast<std::size_t>(out_w * out_h), 0);
    for (Index t = 0; t < tiles; ++t) {
        const Index x0 = t * (width * scale + gap);
        for (Index r = 0; r < height; ++r) {
            for (Index c = 0; c < width; ++c) {
                const double v = (images(t, r * width + c) - lo) / span;
                const auto level = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
                for (Index dy = 0; dy < scale; ++dy) {
                    for (Index dx = 0; dx < scale; ++dx) {
                        pixels[static_cast<std::size_t>((r * scale + dy) * out_w + x0 + c * scale + dx)] = level;
                    }
                }
            }
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << "P5\n" << out_w << ' ' << out_h << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void save_network(const NeuralVae& network, const std::string& path) {
    const MlpSpec& s = network.spec();
    nlohmann::json j;
    j["format"] = kFormat;
    j["spec"] = {{"encoder_hidden", s.encoder_hidden},
                 {"decoder_hidden", s.decoder_hidden},
                 {"k", s.latent_dim},
                 {"N", s.data_dim},
                 {"activation", to_string(s.activation)}};
    for (const auto& l : network.layers()) {
        j["layers"].push_back({{"w", matrix_to_json(l.w)}, {"b", matrix_to_json(l.b)}});
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << j.dump(1) << '\n';
}

NeuralVae load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open network file " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("network file " + path + ": " + e.what());
    }
    if (j.value("format", std::string{}) != kFormat) {
        throw std::runtime_error("network file " + path + ": unrecognized format");
    }
    try {
        const auto& s = j.at("spec");
        MlpSpec spec;
        spec.encoder_hidden = s.at("encoder_hidden").get<std::vector<Index>>();
        spec.decoder_hidden = s.at("decoder_hidden").get<std::vector<Index>>();
        spec.latent_dim = s.at("k").get<Index>();
        spec.data_dim = s.at("N").get<Index>();
        spec.activation = parse_activation(s.at("activation").get<std::string>());
        NeuralVae net(spec, 0, true);
        const auto& layers = j.at("layers");
        if (layers.size() != net.layers().size()) {
            throw std::runtime_error("layer count mismatch");
        }
        for (std::size_t i = 0; i < layers.size(); ++i) {
            auto& l = net.layers()[i];
            Matrix w = matrix_from_json(layers[i].at("w"));
            Matrix b = matrix_from_json(layers[i].at("b"));
            if (w.rows() != l.w.rows() || w.cols() != l.w.cols() || b.size() != l.b.size()) {
                throw std::runtime_error("layer " + std::to_string(i) + " shape mismatch");
            }
            l.w = std::move(w);
            l.b = b.reshaped();
        }
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("network file " + path + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("network file " + path + ": " + e.what());
    }
}

}  // namespace bvae
