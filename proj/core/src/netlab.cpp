#include "capsense/netlab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>

namespace capsense {

// ---------------------------------------------------------------------------
// Weight banks and digital primitives

WeightBank normalize_weights(const WeightBank& bank) {
  const double beta = bank.v.max_abs();
  if (beta == 0.0) return {bank.v, 1.0};
  WeightBank out{bank.v, beta};
  for (double& x : out.v.flat()) x /= beta;
  return out;
}

WeightBank project_weights(const WeightBank& bank) {
  if (bank.v.max_abs() > 1.0) return normalize_weights(bank);
  return {bank.v, 1.0};
}

WeightBank binarize_weights(const WeightBank& bank) {
  WeightBank out{bank.v, bank.beta};
  for (double& x : out.v.flat()) x = x < 0.0 ? -1.0 : 1.0;
  return out;
}

std::vector<double> softmax(std::span<const double> u) {
  if (u.empty()) throw ShapeError("softmax: empty input");
  for (double x : u) {
    if (!std::isfinite(x)) throw NumericError("softmax: non-finite input");
  }
  const double peak = *std::max_element(u.begin(), u.end());
  std::vector<double> p(u.size());
  double total = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    p[i] = std::exp(u[i] - peak);
    total += p[i];
  }
  for (double& x : p) x /= total;
  return p;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double sigmoid_derivative(double z) {
  const double s = sigmoid(z);
  return s * (1.0 - s);
}

double cross_entropy(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) throw ShapeError("cross_entropy: size mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0.0) loss -= y[i] * std::log(std::max(p[i], 1e-12));
  }
  return loss;
}

TrainConfig TrainConfig::defaults(Architecture arch) {
  TrainConfig cfg;
  switch (arch) {
    case Architecture::kFcClassifier:
      cfg.learning_rate = 10.0;
      cfg.epochs = 350;
      break;
    case Architecture::kAutoencoder:
      cfg.learning_rate = 0.0004;
      cfg.epochs = 60;
      break;
    case Architecture::kCnnClassifier:
      cfg.learning_rate = 1.5;
      cfg.epochs = 60;
      break;
  }
  return cfg;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw DomainError("train.batch_size: must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw DomainError("train.learning_rate: must be > 0");
  }
  if (epochs == 0) throw DomainError("train.epochs: must be >= 1");
  if (eval_per_glyph == 0) throw DomainError("train.eval_per_glyph: must be >= 1");
  if (threads == 0) throw DomainError("train.threads: must be >= 1");
}

namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = dist(rng);
  return m;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_shape(const Gradient& grad, const std::vector<std::span<double>>& params) {
  if (grad.size() != params.size()) throw ShapeError("gradient block count mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (grad[i].size() != params[i].size()) throw ShapeError("gradient block size mismatch");
  }
}

template <class Net>
void apply_gradient(Net& net, const Gradient& grad, double step) {
  auto params = net.parameters();
  check_shape(grad, params);
  for (std::size_t b = 0; b < params.size(); ++b) {
    const auto g = grad[b].flat();
    for (std::size_t i = 0; i < g.size(); ++i) params[b][i] -= step * g[i];
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// FC classifier

FcClassifier::FcClassifier(const SensorParams& params, Matrix weights, bool binarize,
                           std::size_t banks)
    : params_(params),
      topology_(build_fc_array(3, 3, banks)),
      weights_{std::move(weights), 1.0},
      binarize_(binarize) {
  params_.validate();
  if (weights_.v.rows() != kNumGlyphs || weights_.v.cols() != topology_.pixels()) {
    throw ShapeError(fmt::format("FcClassifier: weights must be {}x{}", kNumGlyphs,
                                 topology_.pixels()));
  }
}

FcClassifier FcClassifier::initialize(const SensorParams& params, Rng& rng, bool binarize) {
  return FcClassifier(params, uniform_matrix(kNumGlyphs, 9, 1.0, rng), binarize);
}

Matrix FcClassifier::programmed_weights() const {
  if (binarize_) return binarize_weights(weights_).v;
  Matrix v = weights_.v;
  for (double& x : v.flat()) x /= weights_.beta;
  return v;
}

std::vector<double> FcClassifier::analog_outputs(const Matrix& c_i, Trace* trace,
                                                 const PhaseTiming& timing) const {
  return fc_forward(topology_, c_i, programmed_weights(), params_, trace, timing);
}

std::size_t FcClassifier::predict(const Matrix& c_i) const { return argmax(analog_outputs(c_i)); }

bool FcClassifier::correct(const CapacitiveSample& s) const {
  return predict(s.c_i) == glyph_index(s.glyph());
}

double FcClassifier::loss(const CapacitiveSample& s) const {
  return cross_entropy(softmax(analog_outputs(s.c_i)), s.label);
}

Gradient FcClassifier::zero_gradient() const {
  return {Matrix(weights_.v.rows(), weights_.v.cols())};
}

double FcClassifier::accumulate(const CapacitiveSample& s, Gradient& grad) const {
  const Matrix c = series_image(s.c_i, params_.c0_pf);
  const auto u = fc_forward_series(topology_, c, programmed_weights(), params_.c0_pf);
  const auto p = softmax(u);
  // The programmed voltage is v / beta with beta held fixed, so the latent
  // weight sees the gradient divided by beta.
  const double beta = binarize_ ? 1.0 : weights_.beta;
  const double scale = 1.0 / (static_cast<double>(topology_.pixels()) * params_.c0_pf * beta);
  Matrix& g = grad.at(0);
  for (std::size_t m = 0; m < p.size(); ++m) {
    const double dl_du = p[m] - s.label[m];
    const auto& wiring = topology_.bank_wiring[m % topology_.banks()];
    for (std::size_t n = 0; n < wiring.size(); ++n) {
      // Straight-through when binarized: the latent weight takes this gradient.
      g(m, n) += dl_du * c(wiring[n].row, wiring[n].col) * scale;
    }
  }
  return cross_entropy(p, s.label);
}

std::vector<std::span<double>> FcClassifier::parameters() { return {weights_.v.flat()}; }

void FcClassifier::apply(const Gradient& grad, double step) { apply_gradient(*this, grad, step); }

void FcClassifier::begin_epoch() {
  const double peak = weights_.v.max_abs();
  weights_.beta = peak > 0.0 ? peak : 1.0;
}

// ---------------------------------------------------------------------------
// Autoencoder

struct Autoencoder::Forward {
  std::vector<double> c_i;     // input, flat
  std::vector<double> c_nl;    // normalized series capacitance
  Split split;
  std::vector<double> phi;     // hidden activations
  std::vector<double> z;       // decoder pre-activations
  std::vector<double> s;       // sigmoid(z)
  std::vector<double> c_rec;   // reconstructed series capacitance
  std::vector<double> ci_rec;  // reconstructed induced capacitance
  double loss = 0.0;
};

Autoencoder::Autoencoder(const SensorParams& params, Matrix encoder, Matrix decoder)
    : params_(params),
      topology_(build_fc_array(3, 3, kHidden)),
      encoder_{std::move(encoder), 1.0},
      decoder_(std::move(decoder)),
      c_h_(params.c_high_pf()),
      c_l_(params.c_low_pf()) {
  params_.validate();
  if (encoder_.v.rows() != kHidden || encoder_.v.cols() != topology_.pixels()) {
    throw ShapeError("Autoencoder: encoder must be 4x9");
  }
  if (decoder_.rows() != topology_.pixels() || decoder_.cols() != kHidden) {
    throw ShapeError("Autoencoder: decoder must be 9x4");
  }
}

Autoencoder Autoencoder::initialize(const SensorParams& params, Rng& rng) {
  Matrix enc = uniform_matrix(kHidden, 9, 1.0 / std::sqrt(9.0), rng);
  Matrix dec = uniform_matrix(9, kHidden, 1.0 / std::sqrt(double(kHidden)), rng);
  return Autoencoder(params, std::move(enc), std::move(dec));
}

double Autoencoder::normalize_capacitance(double c_series_pf) const {
  return (c_series_pf - c_l_) / (c_h_ - c_l_);
}

double Autoencoder::denormalize_capacitance(double c_nl) const {
  return c_nl * (c_h_ - c_l_) + c_l_;
}

double Autoencoder::reconstruct_induced(double c_series_pf) const {
  if (!(c_series_pf < params_.c0_pf)) {
    throw NumericError(fmt::format("reconstructed series capacitance {} pF reached C0", c_series_pf));
  }
  return c_series_pf * params_.c0_pf / (params_.c0_pf - c_series_pf);
}

Autoencoder::Split Autoencoder::analog_split(const Matrix& c_i, Trace* trace,
                                             const PhaseTiming& timing) const {
  const double n = static_cast<double>(topology_.pixels());
  const auto mac = fc_forward(topology_, c_i, encoder_.v, params_, trace, timing);
  Split out;
  for (std::size_t m = 0; m < kHidden; ++m) {
    const auto v = encoder_.v.row(m);
    const double a = mac[m] * n * params_.c0_pf;
    const double b = c_l_ * std::accumulate(v.begin(), v.end(), 0.0);
    out.a.push_back(a);
    out.b.push_back(b);
    out.u.push_back((a - b) / (c_h_ - c_l_));
  }
  return out;
}

Autoencoder::Forward Autoencoder::run(const Matrix& c_i) const {
  const std::size_t n = topology_.pixels();
  if (c_i.size() != n) throw ShapeError("Autoencoder: input must be 3x3");
  Forward f;
  f.c_i.assign(c_i.flat().begin(), c_i.flat().end());
  for (double x : f.c_i) f.c_nl.push_back(normalize_capacitance(series_capacitance(x, params_.c0_pf)));
  f.split = analog_split(c_i);
  for (double u : f.split.u) f.phi.push_back(sigmoid(u));
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t m = 0; m < kHidden; ++m) z += decoder_(i, m) * f.phi[m];
    f.z.push_back(z);
    f.s.push_back(sigmoid(z));
    f.c_rec.push_back(denormalize_capacitance(f.s.back()));
    f.ci_rec.push_back(reconstruct_induced(f.c_rec.back()));
    const double err = f.ci_rec.back() - f.c_i[i];
    f.loss += err * err;
  }
  f.loss /= static_cast<double>(n);
  return f;
}

std::vector<double> Autoencoder::encode(const Matrix& c_i) const { return run(c_i).phi; }

Matrix Autoencoder::reconstruct(const Matrix& c_i) const {
  const Forward f = run(c_i);
  Matrix out(c_i.rows(), c_i.cols());
  std::copy(f.ci_rec.begin(), f.ci_rec.end(), out.flat().begin());
  return out;
}

bool Autoencoder::correct(const CapacitiveSample& s) const {
  bool unique = false;
  const LetterImage bitmap = threshold_image(reconstruct(s.c_i), params_);
  return nearest_glyph(bitmap, &unique) == s.glyph() && unique;
}

double Autoencoder::loss(const CapacitiveSample& s) const { return run(s.c_i).loss; }

Gradient Autoencoder::zero_gradient() const {
  return {Matrix(encoder_.v.rows(), encoder_.v.cols()), Matrix(decoder_.rows(), decoder_.cols())};
}

double Autoencoder::accumulate(const CapacitiveSample& s, Gradient& grad) const {
  const Forward f = run(s.c_i);
  const std::size_t n = f.c_i.size();
  const double c0 = params_.c0_pf;
  const double span = c_h_ - c_l_;

  std::vector<double> g_z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g_ci = 2.0 / static_cast<double>(n) * (f.ci_rec[i] - f.c_i[i]);
    const double gap = c0 - f.c_rec[i];
    const double g_crec = g_ci * c0 * c0 / (gap * gap);
    g_z[i] = g_crec * span * f.s[i] * (1.0 - f.s[i]);
  }

  Matrix& g_enc = grad.at(0);
  Matrix& g_dec = grad.at(1);
  for (std::size_t m = 0; m < kHidden; ++m) {
    double g_phi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g_dec(i, m) += g_z[i] * f.phi[m];
      g_phi += g_z[i] * decoder_(i, m);
    }
    const double g_u = g_phi * f.phi[m] * (1.0 - f.phi[m]);
    for (std::size_t i = 0; i < n; ++i) g_enc(m, i) += g_u * f.c_nl[i];
  }
  return f.loss;
}

std::vector<std::span<double>> Autoencoder::parameters() {
  return {encoder_.v.flat(), decoder_.flat()};
}

void Autoencoder::apply(const Gradient& grad, double step) { apply_gradient(*this, grad, step); }

void Autoencoder::begin_epoch() { encoder_ = project_weights(encoder_); }

// ---------------------------------------------------------------------------
// CNN classifier

CnnClassifier::CnnClassifier(const SensorParams& params, Matrix kernel, Matrix head)
    : params_(params),
      topology_(build_conv_array(5, 5, 3)),
      schedule_(schedule_conv(5, 5, 3)),
      kernel_{std::move(kernel), 1.0},
      head_(std::move(head)) {
  params_.validate();
  if (kernel_.v.size() != 9) throw ShapeError("CnnClassifier: kernel must have 9 voltages");
  if (head_.rows() != kNumGlyphs || head_.cols() != schedule_.window_count()) {
    throw ShapeError("CnnClassifier: head must be 4x9");
  }
}

CnnClassifier CnnClassifier::initialize(const SensorParams& params, Rng& rng) {
  Matrix kernel = uniform_matrix(1, 9, 1.0, rng);
  Matrix head = uniform_matrix(kNumGlyphs, 9, 1.0, rng);
  return CnnClassifier(params, std::move(kernel), std::move(head));
}

Matrix CnnClassifier::feature_map(const Matrix& c_i, Trace* trace,
                                  const PhaseTiming& timing) const {
  return conv_forward(topology_, schedule_, c_i, kernel_.v.flat(), params_, trace, timing);
}

std::vector<double> CnnClassifier::logits(const Matrix& c_i) const {
  const Matrix fm = feature_map(c_i);
  std::vector<double> out(head_.rows(), 0.0);
  for (std::size_t m = 0; m < head_.rows(); ++m) {
    for (std::size_t k = 0; k < fm.size(); ++k) out[m] += head_(m, k) * sigmoid(fm.flat()[k]);
  }
  return out;
}

std::size_t CnnClassifier::predict(const Matrix& c_i) const { return argmax(logits(c_i)); }

bool CnnClassifier::correct(const CapacitiveSample& s) const {
  return predict(s.c_i) == glyph_index(s.glyph());
}

double CnnClassifier::loss(const CapacitiveSample& s) const {
  return cross_entropy(softmax(logits(s.c_i)), s.label);
}

Gradient CnnClassifier::zero_gradient() const {
  return {Matrix(kernel_.v.rows(), kernel_.v.cols()), Matrix(head_.rows(), head_.cols())};
}

double CnnClassifier::accumulate(const CapacitiveSample& s, Gradient& grad) const {
  const Matrix c = series_image(s.c_i, params_.c0_pf);
  const Matrix fm =
      conv_forward_series(topology_, schedule_, c, kernel_.v.flat(), params_.c0_pf);
  const std::size_t features = fm.size();
  std::vector<double> phi(features);
  for (std::size_t k = 0; k < features; ++k) phi[k] = sigmoid(fm.flat()[k]);

  std::vector<double> z(head_.rows(), 0.0);
  for (std::size_t m = 0; m < head_.rows(); ++m) {
    for (std::size_t k = 0; k < features; ++k) z[m] += head_(m, k) * phi[k];
  }
  const auto p = softmax(z);

  Matrix& g_kernel = grad.at(0);
  Matrix& g_head = grad.at(1);
  const std::size_t k_size = schedule_.kernel;
  const double scale = 1.0 / (static_cast<double>(k_size * k_size) * params_.c0_pf);
  for (std::size_t k = 0; k < features; ++k) {
    double g_phi = 0.0;
    for (std::size_t m = 0; m < head_.rows(); ++m) {
      const double g_z = p[m] - s.label[m];
      g_head(m, k) += g_z * phi[k];
      g_phi += g_z * head_(m, k);
    }
    const double g_u = g_phi * phi[k] * (1.0 - phi[k]);
    const std::size_t r0 = k / fm.cols();
    const std::size_t c0 = k % fm.cols();
    for (std::size_t j = 0; j < k_size * k_size; ++j) {
      g_kernel.flat()[j] += g_u * c(r0 + j / k_size, c0 + j % k_size) * scale;
    }
  }
  return cross_entropy(p, s.label);
}

std::vector<std::span<double>> CnnClassifier::parameters() {
  return {kernel_.v.flat(), head_.flat()};
}

void CnnClassifier::apply(const Gradient& grad, double step) { apply_gradient(*this, grad, step); }

void CnnClassifier::begin_epoch() { kernel_ = normalize_weights(kernel_); }

// ---------------------------------------------------------------------------
// Training

Architecture model_architecture(const Model& model) {
  return static_cast<Architecture>(model.index());
}

namespace {


template <class Net>
Evaluation evaluate_net(const Net& net, std::span<const CapacitiveSample> batch) {
  Evaluation ev;
  ev.mean_outputs = Matrix(kNumGlyphs, kNumGlyphs);
  std::array<std::size_t, kNumGlyphs> counts{};
  std::size_t hits = 0;
  for (const auto& s : batch) {
    if (net.correct(s)) ++hits;
    ev.loss += net.loss(s);
    const auto out = net.readout(s);
    const std::size_t g = glyph_index(s.glyph());
    for (std::size_t m = 0; m < out.size() && m < kNumGlyphs; ++m) ev.mean_outputs(g, m) += out[m];
    ++counts[g];
  }
  for (std::size_t g = 0; g < kNumGlyphs; ++g) {
    if (counts[g] == 0) continue;
    for (std::size_t m = 0; m < kNumGlyphs; ++m) ev.mean_outputs(g, m) /= double(counts[g]);
  }
  if (!batch.empty()) {
    ev.accuracy = double(hits) / double(batch.size());
    ev.loss /= double(batch.size());
  }
  return ev;
}

struct BatchResult {
  double loss_sum = 0.0;
  Gradient grad;
};

template <class Net>
BatchResult batch_gradient(const Net& net, std::span<const CapacitiveSample> batch,
                           std::size_t threads) {
  const std::size_t workers = std::min(threads, batch.size());
  std::vector<BatchResult> parts(workers);
  auto work = [&](std::size_t w) {
    const std::size_t lo = batch.size() * w / workers;
    const std::size_t hi = batch.size() * (w + 1) / workers;
    parts[w].grad = net.zero_gradient();
    for (std::size_t i = lo; i < hi; ++i) parts[w].loss_sum += net.accumulate(batch[i], parts[w].grad);
  };
  if (workers <= 1) {
    work(0);
    return std::move(parts[0]);
  }
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  // Fixed reduction order keeps multi-threaded runs reproducible among themselves.
  BatchResult total = std::move(parts[0]);
  for (std::size_t w = 1; w < workers; ++w) {
    total.loss_sum += parts[w].loss_sum;
    for (std::size_t b = 0; b < total.grad.size(); ++b) {
      auto dst = total.grad[b].flat();
      const auto src = parts[w].grad[b].flat();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  return total;
}

bool all_finite(const Gradient& grad) {
  for (const auto& m : grad) {
    for (double x : m.flat()) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

template <class Net>
TrainHistory run_training(Net net, const TrainConfig& cfg, const SensorParams& params,
                          std::size_t resolution) {
  Rng train_rng = seeded_rng(cfg.seed, kStreamTrain);
  Rng eval_rng = seeded_rng(cfg.seed, kStreamEval);
  TrainHistory history{.epochs = {}, .model = net};
  history.epochs.reserve(cfg.epochs);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    net.begin_epoch();
    const Net before = net;
    const auto batch = sample_batch(cfg.batch_size, resolution, params, train_rng);

    BatchResult result;
    try {
      result = batch_gradient(net, batch, cfg.threads);
    } catch (const NumericError& e) {
      throw DivergenceError(fmt::format("epoch {}: {}", epoch + 1, e.what()),
                            TrainHistory{history.epochs, before});
    } catch (const RangeError& e) {
      throw DivergenceError(fmt::format("epoch {}: {}", epoch + 1, e.what()),
                            TrainHistory{history.epochs, before});
    }
    const double loss = result.loss_sum / static_cast<double>(batch.size());
    if (!std::isfinite(loss) || !all_finite(result.grad)) {
      throw DivergenceError(fmt::format("epoch {}: non-finite loss or gradient", epoch + 1),
                            TrainHistory{history.epochs, before});
    }
    net.apply(result.grad, cfg.learning_rate / static_cast<double>(batch.size()));

    Net programmed = net;
    const auto eval_batch = balanced_batch(cfg.eval_per_glyph, resolution, params, eval_rng);
    Evaluation ev;
    try {
      programmed.begin_epoch();
      ev = evaluate_net(programmed, eval_batch);
    } catch (const NumericError& e) {
      throw DivergenceError(fmt::format("epoch {}: {}", epoch + 1, e.what()),
                            TrainHistory{history.epochs, before});
    } catch (const RangeError& e) {
      throw DivergenceError(fmt::format("epoch {}: {}", epoch + 1, e.what()),
                            TrainHistory{history.epochs, before});
    }
    if (!std::isfinite(ev.loss)) {
      throw DivergenceError(fmt::format("epoch {}: non-finite evaluation loss", epoch + 1),
                            TrainHistory{history.epochs, before});
    }
    history.epochs.push_back({.loss = loss, .eval_loss = ev.loss, .accuracy = ev.accuracy,
                              .mean_outputs = std::move(ev.mean_outputs)});
  }
  net.begin_epoch();
  history.model = std::move(net);
  return history;
}

}  // namespace

TrainHistory train_fc_classifier(const TrainConfig& config, const SensorParams& params) {
  config.validate();
  params.validate();
  Rng init = seeded_rng(config.seed, kStreamInit);
  return run_training(FcClassifier::initialize(params, init, config.binarize), config, params, 3);
}

TrainHistory train_autoencoder(const TrainConfig& config, const SensorParams& params) {
  config.validate();
  params.validate();
  Rng init = seeded_rng(config.seed, kStreamInit);
  return run_training(Autoencoder::initialize(params, init), config, params, 3);
}

TrainHistory train_cnn_classifier(const TrainConfig& config, const SensorParams& params) {
  config.validate();
  params.validate();
  Rng init = seeded_rng(config.seed, kStreamInit);
  return run_training(CnnClassifier::initialize(params, init), config, params, 5);
}

TrainHistory train(Architecture arch, const TrainConfig& config, const SensorParams& params) {
  switch (arch) {
    case Architecture::kFcClassifier:
      return train_fc_classifier(config, params);
    case Architecture::kAutoencoder:
      return train_autoencoder(config, params);
    case Architecture::kCnnClassifier:
      return train_cnn_classifier(config, params);
  }
  throw UsageError("unknown architecture");
}

Evaluation evaluate(const Model& model, std::span<const CapacitiveSample> batch) {
  return std::visit([&](const auto& net) { return evaluate_net(net, batch); }, model);
}

}  // namespace capsense
