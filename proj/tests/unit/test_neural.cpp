#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "bvae/metrics.hpp"
#include "bvae/neural.hpp"
#include "bvae/rng.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

using namespace bvae;

namespace {

MlpSpec tiny_spec() {
    MlpSpec s;
    s.encoder_hidden = {5, 4};
    s.decoder_hidden = {4};
    s.data_dim = 3;
    s.latent_dim = 2;
    return s;
}

Matrix noise(Index k, Index b, std::uint64_t seed) {
    const CounterStream rng(seed, 0);
    Matrix eps(k, b);
    for (Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal(static_cast<std::uint64_t>(i));
    return eps;
}

TrainConfig short_run(double beta) {
    TrainConfig c;
    c.beta = beta;
    c.epochs = 150;
    c.learning_rate = 0.01;
    c.n_examples = 300;
    c.batch_size = 300;
    c.seed = 5;
    return c;
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "bvae_test_neural";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Activation, ParseAndPrint) {
    EXPECT_EQ(parse_activation("tanh"), Activation::Tanh);
    EXPECT_EQ(parse_activation("identity"), Activation::Identity);
    EXPECT_EQ(to_string(Activation::Tanh), "tanh");
    EXPECT_THROW(parse_activation("relu"), std::invalid_argument);
}

TEST(MlpSpec, Validation) {
    MlpSpec s = tiny_spec();
    EXPECT_NO_THROW(s.validate());
    s.encoder_hidden = {3, 0};
    EXPECT_THROW(s.validate(), std::invalid_argument);
    TrainConfig c;
    c.beta = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(NeuralVae, GradientMatchesFiniteDifferences) {
    for (const Activation act : {Activation::Tanh, Activation::Identity}) {
        MlpSpec spec = tiny_spec();
        spec.activation = act;
        NeuralVae net(spec, 3);
        const Matrix x = testkit::normal_matrix(3, 4, 8);
        const Matrix eps = noise(2, 4, 9);
        std::vector<DenseLayer> grad;
        net.evaluate(x, eps, 1.7, &grad);
        const Vector analytic = flatten_layers(grad);
        NeuralVae probe = net;
        const Vector numeric = oracle::fd_gradient(
            [&](const Vector& v) {
                probe.assign(v);
                return probe.evaluate(x, eps, 1.7).objective;
            },
            net.flatten(), 1e-5);
        EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-4) << to_string(act);
    }
}

TEST(NeuralVae, InitDeterministicAndBounded) {
    const NeuralVae a(tiny_spec(), 11);
    const NeuralVae b(tiny_spec(), 11);
    const NeuralVae c(tiny_spec(), 12);
    EXPECT_EQ(a.flatten(), b.flatten());
    EXPECT_NE(a.flatten(), c.flatten());
    for (const auto& layer : a.layers()) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.w.cols()));
        EXPECT_LE(layer.w.cwiseAbs().maxCoeff(), bound);
        EXPECT_LE(layer.b.cwiseAbs().maxCoeff(), bound);
    }
    EXPECT_EQ(a.parameter_count(), a.flatten().size());
    NeuralVae d = a;
    EXPECT_THROW(d.assign(Vector::Zero(3)), std::invalid_argument);
}

TEST(NeuralVae, ObjectiveEqualsElboAtBetaOne) {
    const NeuralVae net(tiny_spec(), 2);
    const BatchTerms t = net.evaluate(testkit::normal_matrix(3, 10, 1), noise(2, 10, 2), 1.0);
    EXPECT_NEAR(t.objective, t.elbo, 1e-12);
    EXPECT_NEAR(t.elbo, t.reconstruction - t.kl, 1e-12);
}

TEST(NeuralVae, LinearEmulation) {
    const LinearParams p = testkit::random_params(3, 2, 4);
    const NeuralVae net = NeuralVae::from_linear(p);
    const Matrix x = testkit::normal_matrix(3, 6, 5);
    const Encoding e = net.encode(x);
    EXPECT_LT((e.mean - ((p.enc.w_mu * x).colwise() + p.enc.b_mu)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((e.log_var - ((p.enc.w_sigma * x).colwise() + p.enc.b_sigma)).cwiseAbs().maxCoeff(), 1e-12);
    const Matrix z = testkit::normal_matrix(2, 6, 6);
    EXPECT_LT((net.decode(z) - ((p.dec.d * z).colwise() + p.dec.b_d)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NeuralVae, LinearEmulationMatchesClosedForm) {
    // Batch estimates from the emulating network agree with the closed form.
    const LinearParams p = testkit::random_zero_bias_params(3, 2, 7, 0.3);
    const GroundTruthModel model = testkit::random_model(3, 2, 7);
    const NeuralVae net = NeuralVae::from_linear(p);
    const Index batches = 200, size = 500;
    double sum = 0.0, sum_sq = 0.0;
    for (Index b = 0; b < batches; ++b) {
        const Matrix x = sample_data(model, size, derive_seed(70, b)).x.transpose();
        const double v = net.evaluate(x, noise(2, size, derive_seed(71, b)), 2.0).objective;
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / batches;
    const double se = std::sqrt((sum_sq / batches - mean * mean) / (batches - 1));
    const double closed = objective_full(p.enc, p.dec, data_covariance(model), 2.0);
    EXPECT_LT(std::abs(mean - closed), 3.0 * se) << mean << " vs " << closed << " se " << se;
}

TEST(Train, DeterministicAndImproves) {
    const GroundTruthModel model = GroundTruthModel::from_formula(2, 2, 2.0, 0.73);
    MlpSpec spec;
    spec.encoder_hidden = {8};
    spec.decoder_hidden = {8};
    const Matrix x = sample_data(model, 300, 1).x;
    const TrainResult a = train(spec, short_run(1.0), x);
    const TrainResult b = train(spec, short_run(1.0), x);
    EXPECT_EQ(a.network.flatten(), b.network.flatten());
    ASSERT_EQ(a.log.size(), 150u);
    EXPECT_GT(a.log.back().objective, a.log.front().objective + 1.0);
    EXPECT_EQ(a.log.back().epoch, 150);
}

TEST(Train, LargeBetaShrinksKl) {
    const GroundTruthModel model = GroundTruthModel::from_formula(2, 2, 2.0, 0.73);
    MlpSpec spec;
    spec.encoder_hidden = {8};
    spec.decoder_hidden = {8};
    const Matrix x = sample_data(model, 300, 1).x;
    const TrainResult low = train(spec, short_run(1.0), x);
    const TrainResult high = train(spec, short_run(100.0), x);
    EXPECT_LT(high.log.back().cond_indep_loss, 0.1 * low.log.back().cond_indep_loss);
}

TEST(Train, MinibatchesRun) {
    const GroundTruthModel model = GroundTruthModel::from_formula(2, 2, 2.0, 0.73);
    MlpSpec spec;
    spec.encoder_hidden = {4};
    spec.decoder_hidden = {4};
    TrainConfig c = short_run(1.0);
    c.epochs = 5;
    c.batch_size = 64;
    const TrainResult r = train(spec, c, sample_data(model, 300, 1).x);
    EXPECT_EQ(r.log.size(), 5u);
    EXPECT_TRUE(r.network.flatten().allFinite());
}

TEST(Train, DivergenceIsReported) {
    const GroundTruthModel model = GroundTruthModel::from_formula(2, 2, 200.0, 0.0);
    MlpSpec spec;
    spec.encoder_hidden = {4};
    spec.decoder_hidden = {4};
    spec.activation = Activation::Identity;
    TrainConfig c = short_run(1.0);
    c.learning_rate = 1e6;
    c.epochs = 200;
    EXPECT_THROW(train(spec, c, sample_data(model, 300, 1).x), TrainingDiverged);
}

TEST(Train, RejectsBadData) {
    MlpSpec spec;
    spec.encoder_hidden = {4};
    spec.decoder_hidden = {4};
    EXPECT_THROW(train(spec, short_run(1.0), Matrix::Zero(300, 3)), std::invalid_argument);
    EXPECT_THROW(train(spec, short_run(1.0), Matrix::Zero(10, 2)), std::invalid_argument);
}

TEST(Tie, ZeroHeadsOnNullModel) {
    // Zeroed heads encode every x as N(0, I), which is the exact posterior when A = 0.
    MlpSpec spec;
    spec.encoder_hidden = {4};
    spec.decoder_hidden = {4};
    const NeuralVae net(spec, 1, true);
    const TieEstimate t = estimate_tie(net, GroundTruthModel(Matrix::Zero(2, 2)), 500, 3);
    EXPECT_NEAR(t.mean, 0.0, 1e-12);
    EXPECT_NEAR(t.std_error, 0.0, 1e-12);
}

TEST(Tie, LinearEmulationMatchesClosedForm) {
    const GroundTruthModel model = testkit::random_model(3, 2, 12);
    const LinearParams p = testkit::random_zero_bias_params(3, 2, 12, 0.3);
    const NeuralVae net = NeuralVae::from_linear(p);
    const TieEstimate t = estimate_tie(net, model, 20000, 5, false);
    const double closed = inference_error(p.enc, ground_truth_posterior(model), data_covariance(model));
    EXPECT_LT(std::abs(t.mean - closed), 3.0 * t.std_error) << t.mean << " vs " << closed;
    // A relabeled copy aligns to the closed-form minimum over relabelings.
    const SignedPermutation perm{{1, 0}, {1, -1}};
    LinearParams q = p;
    q.enc = relabel(p.enc, perm);
    q.dec = relabel(p.dec, perm);
    const double best = aligned_inference_error(q.enc, ground_truth_posterior(model), data_covariance(model));
    const TieEstimate aligned = estimate_tie(NeuralVae::from_linear(q), model, 20000, 5, true);
    EXPECT_LT(std::abs(aligned.mean - best), 3.0 * aligned.std_error) << aligned.mean << " vs " << best;
    EXPECT_LE(best, closed + 1e-12);
    EXPECT_THROW(estimate_tie(net, model, 1, 5), std::invalid_argument);
}

TEST(Traversal, VariesOnlyChosenUnit) {
    LinearParams p = LinearParams::zeros(3, 2);
    p.enc.w_mu = testkit::normal_matrix(2, 3, 1);
    p.dec.d = testkit::normal_matrix(3, 2, 2);
    const NeuralVae net = NeuralVae::from_linear(p);
    const Vector base = testkit::normal_matrix(3, 1, 3).col(0);
    const std::vector<double> values{-1.0, 0.0, 2.0};
    const Matrix rows = latent_traversal(net, base, 0, values);
    ASSERT_EQ(rows.rows(), 3);
    ASSERT_EQ(rows.cols(), 3);
    const Vector mu = p.enc.w_mu * base;
    for (std::size_t i = 0; i < values.size(); ++i) {
        Vector z = mu;
        z(0) = values[i];
        EXPECT_LT((rows.row(static_cast<Index>(i)).transpose() - p.dec.d * z).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_THROW(latent_traversal(net, base, 2, values), std::invalid_argument);
}

TEST(Pgm, HeaderAndScaling) {
    Matrix images(2, 4);
    images << 0.0, 1.0, 2.0, 3.0, 3.0, 2.0, 1.0, 0.0;
    const auto path = scratch("grid.pgm");
    write_pgm_grid(path.string(), images, 2, 2, 2);
    std::ifstream in(path, std::ios::binary);
    std::string magic;
    Index w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    in.get();
    EXPECT_EQ(magic, "P5");
    EXPECT_EQ(w, 2 * 2 * 2 + 2);
    EXPECT_EQ(h, 4);
    EXPECT_EQ(maxval, 255);
    std::vector<unsigned char> px(static_cast<std::size_t>(w * h));
    in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    EXPECT_EQ(in.gcount(), w * h);
    EXPECT_EQ(px[0], 0);                                          // first tile, value 0
    EXPECT_EQ(px[static_cast<std::size_t>(3 * w + 3)], 255);      // first tile, value 3
    EXPECT_EQ(px[4], 0);                                          // gap column
    EXPECT_THROW(write_pgm_grid(path.string(), images, 3, 2), std::invalid_argument);
}

TEST(NetworkFile, RoundTrip) {
    const NeuralVae net(tiny_spec(), 21);
    const auto path = scratch("net.json");
    save_network(net, path.string());
    const NeuralVae back = load_network(path.string());
    EXPECT_EQ(back.flatten(), net.flatten());
    EXPECT_EQ(back.spec().encoder_hidden, net.spec().encoder_hidden);
    EXPECT_EQ(back.spec().activation, net.spec().activation);

    std::ofstream(scratch("bad.json")) << R"({"format": "something-else"})";
    EXPECT_ANY_THROW(load_network(scratch("bad.json").string()));
    EXPECT_ANY_THROW(load_network(scratch("missing.json").string()));
}
