#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "capsense/netlab.hpp"

using namespace capsense;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

// Worst relative error between the analytic gradient and central differences
// of the summed batch loss. Entries where both sides are ~0 are skipped.
template <class Net>
double gradient_error(Net net, const std::vector<CapacitiveSample>& batch) {
  Gradient g = net.zero_gradient();
  for (const auto& s : batch) net.accumulate(s, g);
  auto params = net.parameters();
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double x = params[b][i];
      const double h = 1e-5 * std::max(1.0, std::abs(x));
      params[b][i] = x + h;
      double up = 0.0;
      for (const auto& s : batch) up += net.loss(s);
      params[b][i] = x - h;
      double down = 0.0;
      for (const auto& s : batch) down += net.loss(s);
      params[b][i] = x;
      const double fd = (up - down) / (2.0 * h);
      const double an = g[b].flat()[i];
      const double scale = std::abs(fd) + std::abs(an);
      if (scale < 1e-10) continue;
      worst = std::max(worst, std::abs(fd - an) / scale);
    }
  }
  return worst;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST(Softmax, MatchesDirectFormula) {
  Rng rng(41);
  std::uniform_real_distribution<double> d(-5.0, 5.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> u(4);
    for (double& x : u) x = d(rng);
    const auto p = softmax(u);
    double z = 0.0;
    for (double x : u) z += std::exp(x);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_LT(rel_err(p[i], std::exp(u[i]) / z), 1e-12);
  }
  const std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(softmax(bad), NumericError);
}

TEST(Softmax, LargeInputsStayFinite) {
  const std::vector<double> u{1000.0, 999.0, -1000.0};
  const auto p = softmax(u);
  for (double x : p) EXPECT_TRUE(std::isfinite(x));
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
}

TEST(CrossEntropy, UniformIsLogFour) {
  const std::vector<double> p(4, 0.25), y{0.0, 0.0, 1.0, 0.0};
  EXPECT_NEAR(cross_entropy(p, y), std::log(4.0), 1e-15);
  const std::vector<double> zero{0.0, 1.0, 0.0, 0.0}, hit{1.0, 0.0, 0.0, 0.0};
  EXPECT_NEAR(cross_entropy(zero, hit), -std::log(1e-12), 1e-9);
}

TEST(Sigmoid, DerivativeMatchesCentralDifference) {
  for (double z = -8.0; z <= 8.0; z += 0.37) {
    const double h = 1e-5;
    const double fd = (sigmoid(z + h) - sigmoid(z - h)) / (2 * h);
    EXPECT_LT(rel_err(sigmoid_derivative(z), fd), 1e-6);
  }
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
}

TEST(Normalize, WorkedExample) {
  WeightBank b{Matrix(2, 2), 1.0};
  b.v(0, 0) = 2.0;
  b.v(0, 1) = -4.0;
  b.v(1, 0) = 1.0;
  const auto n = normalize_weights(b);
  EXPECT_EQ(n.beta, 4.0);
  EXPECT_EQ(n.v(0, 0), 0.5);
  EXPECT_EQ(n.v(0, 1), -1.0);
  EXPECT_EQ(n.v(1, 0), 0.25);
  EXPECT_EQ(n.v(1, 1), 0.0);
}

TEST(Normalize, ZeroBankUnchanged) {
  const WeightBank z{Matrix(4, 9), 7.0};
  const auto n = normalize_weights(z);
  EXPECT_EQ(n.beta, 1.0);
  EXPECT_EQ(n.v, z.v);
}

TEST(Normalize, MaxIsExactlyOne) {
  Rng rng(42);
  std::uniform_real_distribution<double> d(-30.0, 30.0);
  for (int t = 0; t < 500; ++t) {
    WeightBank b{Matrix(4, 9), 1.0};
    for (double& x : b.v.flat()) x = d(rng);
    EXPECT_EQ(normalize_weights(b).v.max_abs(), 1.0);
  }
}

TEST(Normalize, PreservesFcArgmax) {
  Rng rng(43);
  const SensorParams p;
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  for (int t = 0; t < 100; ++t) {
    WeightBank b{Matrix(4, 9), 1.0};
    for (double& x : b.v.flat()) x = d(rng);
    const FcClassifier raw(p, b.v);
    const FcClassifier scaled(p, normalize_weights(b).v);
    const auto batch = sample_batch(5, 3, p, rng);
    for (const auto& s : batch) EXPECT_EQ(raw.predict(s.c_i), scaled.predict(s.c_i));
  }
}

TEST(Project, OnlyShrinks) {
  WeightBank small{Matrix(1, 2), 1.0};
  small.v(0, 0) = 0.5;
  small.v(0, 1) = -0.25;
  const auto a = project_weights(small);
  EXPECT_EQ(a.beta, 1.0);
  EXPECT_EQ(a.v, small.v);
  WeightBank big = small;
  big.v(0, 1) = -2.0;
  const auto b = project_weights(big);
  EXPECT_EQ(b.beta, 2.0);
  EXPECT_EQ(b.v(0, 1), -1.0);
}

TEST(Binarize, SignWithPositiveZero) {
  WeightBank b{Matrix(1, 4), 3.0};
  b.v(0, 0) = -0.1;
  b.v(0, 1) = 0.0;
  b.v(0, 2) = 2.0;
  b.v(0, 3) = -0.0;
  const auto s = binarize_weights(b);
  EXPECT_EQ(s.v(0, 0), -1.0);
  EXPECT_EQ(s.v(0, 1), 1.0);
  EXPECT_EQ(s.v(0, 2), 1.0);
  EXPECT_EQ(s.v(0, 3), 1.0);
}

TEST(Binarize, OutputsWithinMacBounds) {
  Rng rng(44);
  const SensorParams p;
  auto net = FcClassifier::initialize(p, rng, true);
  net.begin_epoch();
  const double bound = p.c_high_pf() / p.c0_pf;
  for (const auto& s : sample_batch(200, 3, p, rng)) {
    for (double u : net.analog_outputs(s.c_i)) EXPECT_LE(std::abs(u), bound + 1e-15);
  }
  const Matrix programmed = net.programmed_weights();
  for (double w : programmed.flat()) EXPECT_EQ(std::abs(w), 1.0);
}

TEST(Gradients, FcClassifier) {
  const SensorParams p;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto net = FcClassifier::initialize(p, rng);
    net.begin_epoch();
    net.weights().beta *= 1.1;  // headroom so +-h stays within [-1, 1]
    EXPECT_LT(gradient_error(net, sample_batch(4, 3, p, rng)), 1e-5);
  }
}

TEST(Gradients, Autoencoder) {
  const SensorParams p;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto net = Autoencoder::initialize(p, rng);
    net.begin_epoch();
    EXPECT_LT(gradient_error(net, sample_batch(4, 3, p, rng)), 1e-5);
  }
}

TEST(Gradients, CnnClassifier) {
  const SensorParams p;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto net = CnnClassifier::initialize(p, rng);
    net.begin_epoch();
    for (double& x : net.kernel().v.flat()) x *= 0.9;
    EXPECT_LT(gradient_error(net, sample_batch(4, 5, p, rng)), 1e-5);
  }
}

TEST(Autoencoder, SplitEqualsNormalizedDot) {
  Rng rng(45);
  const SensorParams p;
  auto net = Autoencoder::initialize(p, rng);
  for (const auto& s : sample_batch(50, 3, p, rng)) {
    const auto split = net.analog_split(s.c_i);
    for (std::size_t m = 0; m < Autoencoder::kHidden; ++m) {
      double direct = 0.0;
      for (std::size_t n = 0; n < 9; ++n) {
        const double c = series_capacitance(s.c_i.flat()[n], p.c0_pf);
        direct += net.normalize_capacitance(c) * net.encoder().v(m, n);
      }
      EXPECT_NEAR(split.u[m], direct, 1e-9 * std::max(1.0, std::abs(direct)));
    }
  }
}

TEST(Autoencoder, IdentityChains) {
  Rng rng(46);
  const SensorParams p;
  const auto net = Autoencoder::initialize(p, rng);
  std::uniform_real_distribution<double> cd(net.c_low_pf(), net.c_high_pf());
  std::uniform_real_distribution<double> id(p.c_il_pf, p.c_ih_pf);
  for (int t = 0; t < 1000; ++t) {
    const double c = cd(rng);
    EXPECT_LT(rel_err(net.denormalize_capacitance(net.normalize_capacitance(c)), c), 1e-9);
    const double ci = id(rng);
    EXPECT_LT(rel_err(net.reconstruct_induced(series_capacitance(ci, p.c0_pf)), ci), 1e-9);
  }
  EXPECT_THROW(net.reconstruct_induced(p.c0_pf), NumericError);
}

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(TrainConfig::defaults(Architecture::kAutoencoder).validate());
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), DomainError);
  EXPECT_EQ(TrainConfig::defaults(Architecture::kFcClassifier).epochs, 350u);
  EXPECT_EQ(TrainConfig::defaults(Architecture::kFcClassifier).batch_size, 20u);
  EXPECT_EQ(TrainConfig::defaults(Architecture::kAutoencoder).learning_rate, 0.0004);
}

TEST(Training, HistoryLengthAndDeterminism) {
  const SensorParams p;
  for (Architecture arch : {Architecture::kFcClassifier, Architecture::kAutoencoder,
                            Architecture::kCnnClassifier}) {
    TrainConfig c = TrainConfig::defaults(arch);
    c.epochs = 8;
    c.seed = 9;
    const auto a = train(arch, c, p);
    const auto b = train(arch, c, p);
    ASSERT_EQ(a.epochs.size(), 8u);
    for (std::size_t e = 0; e < 8; ++e) {
      EXPECT_EQ(a.epochs[e].loss, b.epochs[e].loss);
      EXPECT_EQ(a.epochs[e].eval_loss, b.epochs[e].eval_loss);
      EXPECT_EQ(a.epochs[e].accuracy, b.epochs[e].accuracy);
      EXPECT_EQ(a.epochs[e].mean_outputs, b.epochs[e].mean_outputs);
    }
  }
}

TEST(Training, ThreadedMatchesSerialWithinTolerance) {
  const SensorParams p;
  TrainConfig c = TrainConfig::defaults(Architecture::kFcClassifier);
  c.epochs = 20;
  const auto serial = train(Architecture::kFcClassifier, c, p);
  c.threads = 4;
  const auto threaded = train(Architecture::kFcClassifier, c, p);
  for (std::size_t e = 0; e < 20; ++e) {
    EXPECT_NEAR(serial.epochs[e].loss, threaded.epochs[e].loss, 1e-9);
    EXPECT_NEAR(serial.epochs[e].eval_loss, threaded.epochs[e].eval_loss, 1e-9);
  }
}

TEST(Training, TrainedFcClassifiesCleanLetters) {
  const SensorParams p;
  TrainConfig c = TrainConfig::defaults(Architecture::kFcClassifier);
  c.epochs = 100;
  const auto h = train(Architecture::kFcClassifier, c, p);
  const auto& net = std::get<FcClassifier>(h.model);
  for (Glyph g : kAllGlyphs) {
    const auto s = encode_capacitive(letter(g, 3), p);
    EXPECT_EQ(argmax(net.analog_outputs(s.c_i)), glyph_index(g));
  }
}

TEST(Training, ProgrammedWeightsStayInRange) {
  const SensorParams p;
  TrainConfig c = TrainConfig::defaults(Architecture::kCnnClassifier);
  c.epochs = 5;
  const auto h = train(Architecture::kCnnClassifier, c, p);
  EXPECT_LE(std::get<CnnClassifier>(h.model).kernel().v.max_abs(), 1.0);
  c = TrainConfig::defaults(Architecture::kAutoencoder);
  c.epochs = 5;
  c.learning_rate = 0.05;
  const auto ae = train(Architecture::kAutoencoder, c, p);
  EXPECT_LE(std::get<Autoencoder>(ae.model).encoder().v.max_abs(), 1.0);
}

TEST(Training, CnnNoiselessNoSlowerThanNoisy) {
  auto first_perfect = [](const TrainHistory& h) {
    for (std::size_t e = 0; e < h.epochs.size(); ++e) {
      if (h.epochs[e].accuracy == 1.0) return e + 1;
    }
    return h.epochs.size() + 1;
  };
  TrainConfig c = TrainConfig::defaults(Architecture::kCnnClassifier);
  c.epochs = 40;
  SensorParams noisy;
  SensorParams clean;
  clean.noise_frac = 0.0;
  EXPECT_LE(first_perfect(train(Architecture::kCnnClassifier, c, clean)),
            first_perfect(train(Architecture::kCnnClassifier, c, noisy)));
}

TEST(Evaluate, MeanOutputsShape) {
  const SensorParams p;
  Rng rng(47);
  const Model m = FcClassifier::initialize(p, rng);
  const auto batch = balanced_batch(5, 3, p, rng);
  const auto ev = evaluate(m, batch);
  EXPECT_EQ(ev.mean_outputs.rows(), 4u);
  EXPECT_EQ(ev.mean_outputs.cols(), 4u);
  EXPECT_GE(ev.accuracy, 0.0);
  EXPECT_LE(ev.accuracy, 1.0);
  EXPECT_GT(ev.loss, 0.0);
}
