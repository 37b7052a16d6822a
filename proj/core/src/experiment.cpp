#include "capsense/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#ifndef CAPSENSE_VERSION
#define CAPSENSE_VERSION "0.0.0"
#endif

namespace capsense {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double to_double(const std::string& field, std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(field, fmt::format("expected a number, got '{}'", text));
  }
  return v;
}

std::uint64_t to_unsigned(const std::string& field, std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(field, fmt::format("expected a non-negative integer, got '{}'", text));
  }
  return v;
}

bool to_bool(const std::string& field, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(field, fmt::format("expected true or false, got '{}'", text));
}

std::set<Artifact> to_artifacts(const std::string& field, std::string_view text) {
  std::set<Artifact> out;
  if (trim(text) == "none") return out;
  if (trim(text) == "all") return kAllArtifacts;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto item = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (item.empty()) continue;
    bool found = false;
    for (Artifact a : kAllArtifacts) {
      if (artifact_name(a) == item) {
        out.insert(a);
        found = true;
      }
    }
    if (!found) {
      throw ConfigError(field, fmt::format("unknown artifact '{}' (expected history, waveform, "
                                           "reconstruction, schedule or checkpoint)",
                                           item));
    }
  }
  return out;
}

template <class Fn>
auto rethrow_as(const std::string& field, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const UsageError& e) {
    throw ConfigError(field, e.what());
  }
}

std::string checksum_file(const std::filesystem::path& path, std::uintmax_t* bytes) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string data = ss.str();
  if (bytes != nullptr) *bytes = data.size();
  return fnv1a_hex(data);
}

template <class WriteFn>
void write_file(const std::filesystem::path& path, WriteFn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError(fmt::format("cannot write '{}'", path.string()));
  fn(os);
  if (!os) throw UsageError(fmt::format("failed writing '{}'", path.string()));
}

CapacitiveSample clean_letter(Glyph g, std::size_t resolution, const SensorParams& params) {
  return encode_capacitive(letter(g, resolution), params);
}

// Traced first-layer pass on the clean inverted Z, the letter used for the
// waveform figure.
Trace waveform_trace(const Model& model, const PhaseTiming& timing) {
  Trace trace;
  std::visit(
      [&](const auto& net) {
        using Net = std::decay_t<decltype(net)>;
        if constexpr (std::is_same_v<Net, FcClassifier>) {
          net.analog_outputs(clean_letter(Glyph::kInvZ, 3, net.params()).c_i, &trace, timing);
        } else if constexpr (std::is_same_v<Net, Autoencoder>) {
          net.analog_split(clean_letter(Glyph::kInvZ, 3, net.params()).c_i, &trace, timing);
        } else {
          net.feature_map(clean_letter(Glyph::kInvZ, 5, net.params()).c_i, &trace, timing);
        }
      },
      model);
  return trace;
}

const ArrayTopology& model_topology(const Model& model) {
  return std::visit([](const auto& net) -> const ArrayTopology& { return net.topology(); }, model);
}

}  // namespace

std::string_view artifact_name(Artifact a) {
  switch (a) {
    case Artifact::kHistory:
      return "history";
    case Artifact::kWaveform:
      return "waveform";
    case Artifact::kReconstruction:
      return "reconstruction";
    case Artifact::kSchedule:
      return "schedule";
    case Artifact::kCheckpoint:
      return "checkpoint";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  auto check = [](const std::string& section, auto&& fn) {
    try {
      fn();
    } catch (const DomainError& e) {
      // Messages of the form "section.field: reason" carry their own path.
      const std::string_view msg = e.what();
      const auto colon = msg.find(": ");
      if (colon != std::string_view::npos && msg.starts_with(section + ".")) {
        throw ConfigError(std::string(msg.substr(0, colon)), std::string(msg.substr(colon + 2)));
      }
      throw ConfigError(section, e.what());
    }
  };
  check("train", [&] { train.validate(); });
  check("sensor", [&] { sensor.validate(); });
  check("timing", [&] { timing.validate(); });
  check("energy", [&] { energy.validate(); });
  if (train.binarize && architecture != Architecture::kFcClassifier) {
    throw ConfigError("train.binarize", "only the fc_classifier supports binarized weights");
  }
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
}

std::string ExperimentConfig::canonical_text() const {
  std::string emit_list;
  for (Artifact a : emit) {
    if (!emit_list.empty()) emit_list += ",";
    emit_list += artifact_name(a);
  }
  std::string out;
  auto line = [&](std::string_view key, const auto& value) {
    out += fmt::format("{} = {}\n", key, value);
  };
  line("architecture", architecture_name(architecture));
  line("emit", emit_list.empty() ? std::string("none") : emit_list);
  line("train.batch_size", train.batch_size);
  line("train.learning_rate", train.learning_rate);
  line("train.epochs", train.epochs);
  line("train.seed", train.seed);
  line("train.binarize", train.binarize ? "true" : "false");
  line("train.eval_per_glyph", train.eval_per_glyph);
  line("train.threads", train.threads);
  line("sensor.c0_pf", sensor.c0_pf);
  line("sensor.c_ih_pf", sensor.c_ih_pf);
  line("sensor.c_il_pf", sensor.c_il_pf);
  line("sensor.noise_frac", sensor.noise_frac);
  line("sensor.noise_mode", noise_mode_name(sensor.noise_mode));
  line("sensor.noise_floor_pf", sensor.noise_floor_pf);
  line("timing.clear_ns", timing.clear_ns);
  line("timing.charge_ns", timing.charge_ns);
  line("timing.transfer_ns", timing.transfer_ns);
  line("timing.sum_ns", timing.sum_ns);
  line("energy.mode", energy_mode_name(energy.mode));
  line("energy.e_per_classification_nj", energy.e_per_classification_nj);
  line("energy.supply_v", energy.supply_v);
  return out;
}

ConfigValues parse_config_text(std::string_view text) {
  ConfigValues values;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("line {}", line_no), "expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(fmt::format("line {}", line_no), "empty key");
    values[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return values;
}

ExperimentConfig build_config(const ConfigValues& values) {
  ExperimentConfig cfg;
  if (auto it = values.find("architecture"); it != values.end()) {
    cfg.architecture = rethrow_as("architecture", [&] { return architecture_from_name(it->second); });
  }
  cfg.train = TrainConfig::defaults(cfg.architecture);

  for (const auto& [key, value] : values) {
    const std::string& k = key;
    if (k == "architecture") continue;
    if (k == "output_dir") {
      cfg.output_dir = value;
    } else if (k == "emit") {
      cfg.emit = to_artifacts(k, value);
    } else if (k == "train.batch_size") {
      cfg.train.batch_size = to_unsigned(k, value);
    } else if (k == "train.learning_rate") {
      cfg.train.learning_rate = to_double(k, value);
    } else if (k == "train.epochs") {
      cfg.train.epochs = to_unsigned(k, value);
    } else if (k == "train.seed") {
      cfg.train.seed = to_unsigned(k, value);
    } else if (k == "train.binarize") {
      cfg.train.binarize = to_bool(k, value);
    } else if (k == "train.eval_per_glyph") {
      cfg.train.eval_per_glyph = to_unsigned(k, value);
    } else if (k == "train.threads") {
      cfg.train.threads = to_unsigned(k, value);
    } else if (k == "sensor.c0_pf") {
      cfg.sensor.c0_pf = to_double(k, value);
    } else if (k == "sensor.c_ih_pf") {
      cfg.sensor.c_ih_pf = to_double(k, value);
    } else if (k == "sensor.c_il_pf") {
      cfg.sensor.c_il_pf = to_double(k, value);
    } else if (k == "sensor.noise_frac") {
      cfg.sensor.noise_frac = to_double(k, value);
    } else if (k == "sensor.noise_mode") {
      cfg.sensor.noise_mode = rethrow_as(k, [&] { return noise_mode_from_name(value); });
    } else if (k == "sensor.noise_floor_pf") {
      cfg.sensor.noise_floor_pf = to_double(k, value);
    } else if (k == "timing.clear_ns") {
      cfg.timing.clear_ns = to_double(k, value);
    } else if (k == "timing.charge_ns") {
      cfg.timing.charge_ns = to_double(k, value);
    } else if (k == "timing.transfer_ns") {
      cfg.timing.transfer_ns = to_double(k, value);
    } else if (k == "timing.sum_ns") {
      cfg.timing.sum_ns = to_double(k, value);
    } else if (k == "energy.mode") {
      cfg.energy.mode = rethrow_as(k, [&] { return energy_mode_from_name(value); });
    } else if (k == "energy.e_per_classification_nj") {
      cfg.energy.e_per_classification_nj = to_double(k, value);
    } else if (k == "energy.supply_v") {
      cfg.energy.supply_v = to_double(k, value);
    } else {
      throw ConfigError(k, "unknown key");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const ConfigValues& overrides) {
  ConfigValues values;
  if (path) {
    std::ifstream is(*path, std::ios::binary);
    if (!is) throw ConfigError("config", fmt::format("cannot open '{}'", path->string()));
    std::ostringstream ss;
    ss << is.rdbuf();
    values = parse_config_text(ss.str());
  }
  for (const auto& [k, v] : overrides) values[k] = v;
  return build_config(values);
}

std::string_view library_version() { return CAPSENSE_VERSION; }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string manifest_text(const RunManifest& m) {
  std::string out = "capsense-manifest 1\n";
  out += fmt::format("version {}\n", m.version);
  out += fmt::format("architecture {}\n", architecture_name(m.architecture));
  out += fmt::format("seed {}\n", m.seed);
  out += fmt::format("config_hash fnv1a64:{}\n", m.config_hash);
  out += fmt::format("status {}\n", m.status == RunStatus::kOk ? "ok" : "diverged");
  out += fmt::format("epochs_completed {}\n", m.epochs_completed);
  if (!m.message.empty()) out += fmt::format("message {}\n", m.message);
  for (const auto& f : m.files) out += fmt::format("file {} fnv1a64:{} {}\n", f.file, f.checksum, f.bytes);
  return out;
}

int exit_code(const RunManifest& manifest) {
  return manifest.status == RunStatus::kOk ? kExitOk : kExitDiverged;
}

void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& epochs) {
  os << "epoch,loss,accuracy,eval_loss";
  for (Glyph g : kAllGlyphs) {
    for (std::size_t m = 1; m <= kNumGlyphs; ++m) os << fmt::format(",mean_{}_U{}", glyph_name(g), m);
  }
  os << '\n';
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    const auto& r = epochs[e];
    os << fmt::format("{},{},{},{}", e + 1, r.loss, r.accuracy, r.eval_loss);
    for (std::size_t g = 0; g < kNumGlyphs; ++g) {
      for (std::size_t m = 0; m < kNumGlyphs; ++m) {
        const double v = g < r.mean_outputs.rows() && m < r.mean_outputs.cols() ? r.mean_outputs(g, m) : 0.0;
        os << fmt::format(",{}", v);
      }
    }
    os << '\n';
  }
}

std::vector<LetterReconstruction> reconstruct_letters(const Autoencoder& net, std::size_t count,
                                                      bool balanced, Rng& rng) {
  std::vector<CapacitiveSample> inputs;
  if (balanced) {
    std::vector<CapacitiveSample> clean;
    for (const auto& img : letter_patterns(3)) clean.push_back(encode_capacitive(img, net.params()));
    for (std::size_t i = 0; i < count; ++i) inputs.push_back(add_noise(clean[i % kNumGlyphs], net.params(), rng));
  } else {
    inputs = sample_batch(count, 3, net.params(), rng);
  }
  std::vector<LetterReconstruction> out;
  for (const auto& s : inputs) {
    LetterReconstruction r;
    r.glyph = s.glyph();
    r.input = s.c_i;
    r.reconstructed = net.reconstruct(s.c_i);
    r.mse = net.loss(s);
    r.bitmap = threshold_image(r.reconstructed, net.params());
    bool unique = false;
    const Glyph nearest = nearest_glyph(r.bitmap, &unique);
    r.correct = unique && nearest == r.glyph;
    out.push_back(std::move(r));
  }
  return out;
}

EvalReport evaluate_checkpoint(const Checkpoint& checkpoint, const EvalOptions& options) {
  if (options.expect && *options.expect != checkpoint.architecture()) {
    throw UsageError(fmt::format("checkpoint holds a {}, expected {}",
                                 architecture_name(checkpoint.architecture()),
                                 architecture_name(*options.expect)));
  }
  if (options.per_glyph == 0) throw UsageError("per_glyph must be >= 1");
  SensorParams params = checkpoint.params();
  if (options.noise_frac) params.noise_frac = *options.noise_frac;
  params.validate();

  // Rebuild the network around the possibly overridden sensor parameters.
  Model model = std::visit(
      [&](const auto& net) -> Model {
        using Net = std::decay_t<decltype(net)>;
        if constexpr (std::is_same_v<Net, FcClassifier>) {
          FcClassifier copy(params, net.weights().v, net.binarized());
          copy.weights().beta = net.weights().beta;
          return copy;
        } else if constexpr (std::is_same_v<Net, Autoencoder>) {
          Autoencoder copy(params, net.encoder().v, net.decoder());
          copy.encoder().beta = net.encoder().beta;
          return copy;
        } else {
          CnnClassifier copy(params, net.kernel().v, net.head());
          copy.kernel().beta = net.kernel().beta;
          return copy;
        }
      },
      checkpoint.model);

  const std::size_t resolution = model_topology(model).rows;
  Rng rng = seeded_rng(options.seed, kStreamEval);
  const auto batch = balanced_batch(options.per_glyph, resolution, params, rng);
  Evaluation ev = evaluate(model, batch);

  EvalReport report{.architecture = checkpoint.architecture(),
                    .accuracy = ev.accuracy,
                    .loss = ev.loss,
                    .mean_outputs = std::move(ev.mean_outputs),
                    .reconstructions = {}};
  if (const auto* ae = std::get_if<Autoencoder>(&model)) {
    Rng art = seeded_rng(options.seed, kStreamArtifacts);
    report.reconstructions = reconstruct_letters(*ae, 8, false, art);
  }
  return report;
}

std::string format_eval_report(const EvalReport& report) {
  std::string out = fmt::format("architecture {}\naccuracy {:.4f}\nloss {:.6g}\n",
                                architecture_name(report.architecture), report.accuracy, report.loss);
  out += "mean outputs (rows: presented letter)\n";
  for (Glyph g : kAllGlyphs) {
    out += fmt::format("  {:<4}", glyph_name(g));
    const auto row = report.mean_outputs.row(glyph_index(g));
    for (double v : row) out += fmt::format(" {:+.5f}", v);
    out += '\n';
  }
  for (std::size_t i = 0; i < report.reconstructions.size(); ++i) {
    const auto& r = report.reconstructions[i];
    out += fmt::format("reconstruction {} letter {} mse {:.6g} {}\n", i + 1, glyph_name(r.glyph), r.mse,
                       r.correct ? "correct" : "WRONG");
    out += render_ascii(r.bitmap);
  }
  return out;
}

std::string render_ascii(const LetterImage& image) {
  if (image.resolution > 16) {
    throw UsageError(fmt::format("render_ascii: {}x{} exceeds 16x16", image.resolution, image.resolution));
  }
  std::string out;
  for (std::size_t r = 0; r < image.resolution; ++r) {
    for (std::size_t c = 0; c < image.resolution; ++c) out.push_back(image.inside(r, c) ? '#' : '.');
    out.push_back('\n');
  }
  return out;
}

std::string render_ascii(const Matrix& c_i, const SensorParams& params) {
  if (c_i.rows() > 16 || c_i.cols() > 16) {
    throw UsageError(fmt::format("render_ascii: {}x{} exceeds 16x16", c_i.rows(), c_i.cols()));
  }
  const double cut = 0.5 * (params.c_high_pf() + params.c_low_pf());
  std::string out;
  for (std::size_t r = 0; r < c_i.rows(); ++r) {
    for (std::size_t c = 0; c < c_i.cols(); ++c) {
      const double x = c_i(r, c);
      const double series = x > 0.0 ? series_capacitance(x, params.c0_pf) : 0.0;
      out.push_back(series > cut ? '#' : '.');
    }
    out.push_back('\n');
  }
  return out;
}

void write_pgm(std::ostream& os, const std::vector<std::vector<Matrix>>& grid,
               const SensorParams& params) {
  if (grid.empty() || grid.front().empty()) throw UsageError("write_pgm: no images");
  const std::size_t cell_h = grid.front().front().rows();
  const std::size_t cell_w = grid.front().front().cols();
  const std::size_t per_row = grid.front().size();
  for (const auto& row : grid) {
    if (row.size() != per_row) throw ShapeError("write_pgm: ragged image grid");
    for (const auto& m : row) {
      if (m.rows() != cell_h || m.cols() != cell_w) throw ShapeError("write_pgm: images differ in size");
    }
  }
  // One black pixel between neighbouring images.
  const std::size_t width = per_row * (cell_w + 1) - 1;
  const std::size_t height = grid.size() * (cell_h + 1) - 1;
  const double lo = params.c_low_pf();
  const double hi = params.c_high_pf();
  os << fmt::format("P2\n{} {}\n255\n", width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      int level = 0;
      const std::size_t gy = y / (cell_h + 1);
      const std::size_t gx = x / (cell_w + 1);
      const std::size_t r = y % (cell_h + 1);
      const std::size_t c = x % (cell_w + 1);
      if (r < cell_h && c < cell_w) {
        const double v = grid[gy][gx](r, c);
        const double series = v > 0.0 ? series_capacitance(v, params.c0_pf) : 0.0;
        level = static_cast<int>(std::lround(std::clamp((series - lo) / (hi - lo), 0.0, 1.0) * 255.0));
      }
      os << (x == 0 ? "" : " ") << level;
    }
    os << '\n';
  }
}

RunManifest run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);

  RunManifest manifest;
  manifest.version = CAPSENSE_VERSION;
  manifest.architecture = config.architecture;
  manifest.seed = config.train.seed;
  manifest.config_hash = fnv1a_hex(config.canonical_text());

  SensorParams params = config.sensor;
  TrainHistory history = [&] {
    try {
      return train(config.architecture, config.train, params);
    } catch (const DivergenceError& e) {
      manifest.status = RunStatus::kDiverged;
      manifest.message = e.what();
      return e.last_good();
    }
  }();
  manifest.epochs_completed = history.epochs.size();

  const auto& dir = config.output_dir;
  auto record = [&](const std::string& name) {
    ManifestEntry entry{.file = name, .checksum = {}, .bytes = 0};
    entry.checksum = checksum_file(dir / name, &entry.bytes);
    manifest.files.push_back(std::move(entry));
  };
  auto wants = [&](Artifact a) { return config.emit.contains(a); };

  if (wants(Artifact::kHistory)) {
    write_file(dir / "history.csv", [&](std::ostream& os) { write_history_csv(os, history.epochs); });
    record("history.csv");
  }
  if (wants(Artifact::kCheckpoint)) {
    save_checkpoint(dir / "checkpoint.txt",
                    Checkpoint{.model = history.model, .seed = config.train.seed,
                               .epoch = history.epochs.size()});
    record("checkpoint.txt");
  }
  if (wants(Artifact::kWaveform)) {
    const Trace trace = waveform_trace(history.model, config.timing);
    const auto wave = assemble_waveform(trace, config.timing);
    write_file(dir / "waveform.csv", [&](std::ostream& os) { write_waveform_csv(os, wave); });
    record("waveform.csv");
    const NetworkSpec spec = NetworkSpec::defaults(config.architecture);
    const auto report = metrics_report(spec, model_topology(history.model), config.timing,
                                       config.energy, &trace);
    write_file(dir / "metrics.json", [&](std::ostream& os) { os << metrics_to_json(report); });
    record("metrics.json");
  }
  if (wants(Artifact::kSchedule)) {
    const auto& topo = model_topology(history.model);
    write_file(dir / "schedule.json", [&](std::ostream& os) {
      if (topo.kind == ArrayKind::kConvolution) {
        os << schedule_to_json(schedule_conv(topo.rows, topo.cols, topo.kernel));
      } else {
        os << topology_to_json(topo);
      }
    });
    record("schedule.json");
  }
  if (wants(Artifact::kReconstruction)) {
    if (const auto* ae = std::get_if<Autoencoder>(&history.model)) {
      Rng rng = seeded_rng(config.train.seed, kStreamArtifacts);
      const auto recs = reconstruct_letters(*ae, 8, false, rng);
      write_file(dir / "reconstruction.txt", [&](std::ostream& os) {
        for (std::size_t i = 0; i < recs.size(); ++i) {
          const auto& r = recs[i];
          os << fmt::format("letter {} {} mse {} {}\n", i + 1, glyph_name(r.glyph), r.mse,
                            r.correct ? "correct" : "wrong");
          os << "input\n" << render_ascii(r.input, ae->params());
          os << "reconstruction\n" << render_ascii(r.bitmap);
        }
      });
      record("reconstruction.txt");
      // Top row: noisy inputs; bottom row: reconstructions.
      std::vector<std::vector<Matrix>> grid(2);
      for (const auto& r : recs) {
        grid[0].push_back(r.input);
        grid[1].push_back(r.reconstructed);
      }
      write_file(dir / "reconstruction.pgm", [&](std::ostream& os) { write_pgm(os, grid, ae->params()); });
      record("reconstruction.pgm");
    }
  }

  write_file(dir / "manifest.txt", [&](std::ostream& os) { os << manifest_text(manifest); });
  return manifest;
}

}  // namespace capsense
