#pragma once

// Config-driven experiment runner behind the command-line tool. Everything
// the CLI does goes through here.
//
// Config text is flat `key = value` lines with dotted section names:
//
//   architecture = fc_classifier
//   output_dir = runs/fc
//   emit = history, checkpoint
//   train.epochs = 350
//   sensor.noise_frac = 0.2
//
// `#` starts a comment. Training fields left unset take the architecture's
// defaults.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "capsense/checkpoint.hpp"
#include "capsense/error.hpp"
#include "capsense/metrics.hpp"
#include "capsense/netlab.hpp"

namespace capsense {

/// A bad configuration value. what() starts with the field path.
class ConfigError : public UsageError {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : UsageError(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Artifact : std::uint8_t { kHistory, kWaveform, kReconstruction, kSchedule, kCheckpoint };

std::string_view artifact_name(Artifact a);
inline const std::set<Artifact> kAllArtifacts = {Artifact::kHistory, Artifact::kWaveform,
                                                 Artifact::kReconstruction, Artifact::kSchedule,
                                                 Artifact::kCheckpoint};

struct ExperimentConfig {
  Architecture architecture = Architecture::kFcClassifier;
  TrainConfig train = TrainConfig::defaults(Architecture::kFcClassifier);
  SensorParams sensor;
  PhaseTiming timing;
  EnergyModel energy;
  std::filesystem::path output_dir = "capsense-out";
  std::set<Artifact> emit = kAllArtifacts;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  /// Canonical key = value text of every field except output_dir, in a fixed
  /// order. Two configs describe the same experiment iff these match.
  std::string canonical_text() const;
};

using ConfigValues = std::map<std::string, std::string, std::less<>>;

/// Parses config text into raw key/value pairs. Throws ConfigError on
/// malformed lines (field path "line N").
ConfigValues parse_config_text(std::string_view text);

/// Builds a config from raw values: architecture first, then its training
/// defaults, then every other key. Unknown keys and bad values throw
/// ConfigError.
ExperimentConfig build_config(const ConfigValues& values);

/// Reads `path` (if given), then applies `overrides` on top.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const ConfigValues& overrides = {});

std::string_view library_version();

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

struct ManifestEntry {
  std::string file;
  std::string checksum;
  std::uintmax_t bytes = 0;
};

enum class RunStatus : std::uint8_t { kOk, kDiverged };

struct RunManifest {
  std::string version;
  Architecture architecture = Architecture::kFcClassifier;
  std::uint64_t seed = 0;
  std::string config_hash;
  RunStatus status = RunStatus::kOk;
  std::size_t epochs_completed = 0;
  std::string message;  // divergence reason, empty on success
  std::vector<ManifestEntry> files;
};

std::string manifest_text(const RunManifest& manifest);

/// Trains, writes the requested artifacts plus manifest.txt into
/// config.output_dir and returns the manifest. A diverged run writes its
/// artifacts from the last good epoch and reports kDiverged.
RunManifest run_experiment(const ExperimentConfig& config);

/// Process exit code for a manifest: 0 ok, 3 diverged. Config errors map to 2.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;
int exit_code(const RunManifest& manifest);

/// history.csv: epoch,loss,accuracy,eval_loss then mean_<glyph>_U<m> for
/// every glyph and output.
void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& epochs);

struct LetterReconstruction {
  Glyph glyph = Glyph::kH;
  Matrix input;          // noisy induced capacitance
  Matrix reconstructed;  // induced capacitance
  double mse = 0.0;
  LetterImage bitmap;    // thresholded reconstruction
  bool correct = false;  // bitmap's unique nearest glyph is `glyph`
};

/// Reconstructs `count` noisy letters; letters cycle through H, L, Y, InvZ
/// when `balanced`, otherwise they are drawn at random.
std::vector<LetterReconstruction> reconstruct_letters(const Autoencoder& net, std::size_t count,
                                                      bool balanced, Rng& rng);

struct EvalOptions {
  std::optional<Architecture> expect;  // UsageError if the checkpoint differs
  std::optional<double> noise_frac;    // overrides the checkpoint's sensor noise
  std::size_t per_glyph = 25;
  std::uint64_t seed = 1;
};

struct EvalReport {
  Architecture architecture = Architecture::kFcClassifier;
  double accuracy = 0.0;
  double loss = 0.0;
  Matrix mean_outputs;
  std::vector<LetterReconstruction> reconstructions;  // autoencoder only
};

EvalReport evaluate_checkpoint(const Checkpoint& checkpoint, const EvalOptions& options);

/// Human-readable report: accuracy, per-class mean outputs, reconstructions.
std::string format_eval_report(const EvalReport& report);

/// '#' for inside, '.' for outside, one line per row. Capacitance matrices
/// are thresholded at (C_H + C_L) / 2 on the series capacitance. Throws
/// UsageError beyond 16x16.
std::string render_ascii(const LetterImage& image);
std::string render_ascii(const Matrix& c_i, const SensorParams& params);

/// Plain (P2) PGM of a grid of equally sized capacitance images. Gray level
/// is proportional to series capacitance between C_L (black) and C_H (white).
void write_pgm(std::ostream& os, const std::vector<std::vector<Matrix>>& grid,
               const SensorParams& params);

}  // namespace capsense
