#pragma once

// Hardware-in-the-loop networks. The first layer of each network runs on the
// simulated sensor array (array.hpp); activations, losses and the backward
// pass run digitally. Gradients through the analog layer treat the series
// capacitances as constants and the programmed voltages as the variables;
// the normalization divisor beta is a projection step and carries no gradient.

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "capsense/array.hpp"
#include "capsense/dataset.hpp"
#include "capsense/device.hpp"
#include "capsense/error.hpp"
#include "capsense/matrix.hpp"
#include "capsense/network.hpp"

namespace capsense {

/// Programmed voltage weights and the divisor last used to normalize them.
struct WeightBank {
  Matrix v;
  double beta = 1.0;
};

/// v / max|v|. An all-zero bank is returned unchanged with beta = 1.
WeightBank normalize_weights(const WeightBank& bank);

/// Divides by max|v| only when it exceeds 1; otherwise beta = 1.
WeightBank project_weights(const WeightBank& bank);

/// sign(v) with sign(0) = +1.
WeightBank binarize_weights(const WeightBank& bank);

/// Max-subtracted softmax. Throws NumericError on non-finite input.
std::vector<double> softmax(std::span<const double> u);

double sigmoid(double z);

/// d/dz sigmoid(z).
double sigmoid_derivative(double z);

/// -sum y log p, with log clamped at 1e-12.
double cross_entropy(std::span<const double> p, std::span<const double> y);

struct TrainConfig {
  std::size_t batch_size = 20;
  double learning_rate = 10.0;
  std::size_t epochs = 350;
  std::uint64_t seed = 1;
  bool binarize = false;  // FC classifier only
  std::size_t eval_per_glyph = 25;
  std::size_t threads = 1;

  static TrainConfig defaults(Architecture arch);
  void validate() const;
};

/// Gradient blocks in the same order as a network's parameter blocks.
using Gradient = std::vector<Matrix>;

/// 3x3 array, 4 banks, softmax over the 4 analog outputs.
class FcClassifier {
 public:
  FcClassifier(const SensorParams& params, Matrix weights, bool binarize = false,
               std::size_t banks = 4);
  /// Weights uniform in [-1, 1].
  static FcClassifier initialize(const SensorParams& params, Rng& rng, bool binarize = false);

  const SensorParams& params() const { return params_; }
  const ArrayTopology& topology() const { return topology_; }
  const WeightBank& weights() const { return weights_; }
  WeightBank& weights() { return weights_; }
  bool binarized() const { return binarize_; }

  /// Voltages actually programmed into the array (binarized if enabled).
  Matrix programmed_weights() const;

  std::vector<double> analog_outputs(const Matrix& c_i, Trace* trace = nullptr,
                                     const PhaseTiming& timing = {}) const;
  std::vector<double> readout(const CapacitiveSample& s) const { return analog_outputs(s.c_i); }
  std::size_t predict(const Matrix& c_i) const;
  bool correct(const CapacitiveSample& s) const;

  double loss(const CapacitiveSample& s) const;
  double accumulate(const CapacitiveSample& s, Gradient& grad) const;
  Gradient zero_gradient() const;
  std::vector<std::span<double>> parameters();
  void apply(const Gradient& grad, double step);
  /// Refreshes beta = max|v| of the latent weights; the array is programmed
  /// with v / beta.
  void begin_epoch();

 private:
  SensorParams params_;
  ArrayTopology topology_;
  WeightBank weights_;
  bool binarize_ = false;
};

/// 9 -> 4 encoder on the array, 4 -> 9 digital decoder, reconstruction of
/// the induced capacitances, MSE loss in pF^2.
class Autoencoder {
 public:
  static constexpr std::size_t kHidden = 4;

  Autoencoder(const SensorParams& params, Matrix encoder, Matrix decoder);
  /// Encoder uniform in +-1/sqrt(9), decoder uniform in +-1/sqrt(4).
  static Autoencoder initialize(const SensorParams& params, Rng& rng);

  const SensorParams& params() const { return params_; }
  const ArrayTopology& topology() const { return topology_; }
  const WeightBank& encoder() const { return encoder_; }
  WeightBank& encoder() { return encoder_; }
  const Matrix& decoder() const { return decoder_; }  // N x M
  Matrix& decoder() { return decoder_; }
  double c_high_pf() const { return c_h_; }
  double c_low_pf() const { return c_l_; }

  /// (C - C_L) / (C_H - C_L).
  double normalize_capacitance(double c_series_pf) const;
  /// C_nl * (C_H - C_L) + C_L.
  double denormalize_capacitance(double c_nl) const;
  /// C * C0 / (C0 - C); asserts C < C0.
  double reconstruct_induced(double c_series_pf) const;

  struct Split {
    std::vector<double> a;  // sum C_n V_n from the array
    std::vector<double> b;  // C_L sum V_n
    std::vector<double> u;  // (A - B) / (C_H - C_L)
  };
  Split analog_split(const Matrix& c_i, Trace* trace = nullptr,
                     const PhaseTiming& timing = {}) const;

  /// Sigmoid activations of the hidden code.
  std::vector<double> encode(const Matrix& c_i) const;
  /// Reconstructed induced capacitance image.
  Matrix reconstruct(const Matrix& c_i) const;
  std::vector<double> readout(const CapacitiveSample& s) const { return analog_split(s.c_i).u; }
  bool correct(const CapacitiveSample& s) const;

  double loss(const CapacitiveSample& s) const;
  double accumulate(const CapacitiveSample& s, Gradient& grad) const;
  Gradient zero_gradient() const;
  std::vector<std::span<double>> parameters();
  void apply(const Gradient& grad, double step);
  /// Keeps the encoder voltages inside [-1, 1].
  void begin_epoch();

 private:
  struct Forward;
  Forward run(const Matrix& c_i) const;

  SensorParams params_;
  ArrayTopology topology_;
  WeightBank encoder_;
  Matrix decoder_;
  double c_h_;
  double c_l_;
};

/// 5x5 array, one 3x3 kernel scheduled over the array, sigmoid, digital
/// 9 -> 4 head, softmax.
class CnnClassifier {
 public:
  CnnClassifier(const SensorParams& params, Matrix kernel, Matrix head);
  /// Kernel and head uniform in [-1, 1].
  static CnnClassifier initialize(const SensorParams& params, Rng& rng);

  const SensorParams& params() const { return params_; }
  const ArrayTopology& topology() const { return topology_; }
  const ConvSchedule& schedule() const { return schedule_; }
  const WeightBank& kernel() const { return kernel_; }
  WeightBank& kernel() { return kernel_; }
  const Matrix& head() const { return head_; }  // classes x features
  Matrix& head() { return head_; }

  Matrix feature_map(const Matrix& c_i, Trace* trace = nullptr,
                     const PhaseTiming& timing = {}) const;
  std::vector<double> logits(const Matrix& c_i) const;
  std::vector<double> readout(const CapacitiveSample& s) const { return logits(s.c_i); }
  std::size_t predict(const Matrix& c_i) const;
  bool correct(const CapacitiveSample& s) const;

  double loss(const CapacitiveSample& s) const;
  double accumulate(const CapacitiveSample& s, Gradient& grad) const;
  Gradient zero_gradient() const;
  std::vector<std::span<double>> parameters();
  void apply(const Gradient& grad, double step);
  /// Normalizes the kernel so max|v| = 1.
  void begin_epoch();

 private:
  SensorParams params_;
  ArrayTopology topology_;
  ConvSchedule schedule_;
  WeightBank kernel_;
  Matrix head_;
};

using Model = std::variant<FcClassifier, Autoencoder, CnnClassifier>;

Architecture model_architecture(const Model& model);

struct EpochRecord {
  double loss = 0.0;       // mean training-batch loss
  double eval_loss = 0.0;  // mean loss on the fresh evaluation batch
  double accuracy = 0.0;   // on the fresh evaluation batch
  Matrix mean_outputs;    // class x output: mean readout per presented letter
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  Model model;
};

/// Non-finite loss. Carries the epochs completed and the model as it was
/// before the failing epoch.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, TrainHistory last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const TrainHistory& last_good() const { return last_good_; }

 private:
  TrainHistory last_good_;
};

TrainHistory train_fc_classifier(const TrainConfig& config, const SensorParams& params);
TrainHistory train_autoencoder(const TrainConfig& config, const SensorParams& params);
TrainHistory train_cnn_classifier(const TrainConfig& config, const SensorParams& params);
TrainHistory train(Architecture arch, const TrainConfig& config, const SensorParams& params);

/// Fraction of `batch` classified (or, for the autoencoder, reconstructed)
/// correctly, plus per-class mean readouts.
struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
  Matrix mean_outputs;
};
Evaluation evaluate(const Model& model, std::span<const CapacitiveSample> batch);

}  // namespace capsense
