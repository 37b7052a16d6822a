// capsense: train, evaluate and inspect simulated capacitive in-sensor networks.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "capsense/array.hpp"
#include "capsense/checkpoint.hpp"
#include "capsense/dataset.hpp"
#include "capsense/experiment.hpp"
#include "capsense/metrics.hpp"

namespace fs = std::filesystem;
using namespace capsense;

namespace {

struct TrainArgs {
  std::optional<std::string> config;
  std::vector<std::string> set;
  std::optional<std::string> architecture;
  std::optional<std::string> output_dir;
  std::optional<std::string> emit;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> learning_rate;
  std::optional<std::string> noise;
  std::optional<std::size_t> threads;
  bool binarize = false;
};

int cmd_train(const TrainArgs& a) {
  ConfigValues overrides;
  for (const auto& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(kv, "--set expects key=value");
    const auto parsed = parse_config_text(kv);
    for (const auto& [k, v] : parsed) overrides[k] = v;
  }
  if (a.architecture) overrides["architecture"] = *a.architecture;
  if (a.output_dir) overrides["output_dir"] = *a.output_dir;
  if (a.emit) overrides["emit"] = *a.emit;
  if (a.epochs) overrides["train.epochs"] = std::to_string(*a.epochs);
  if (a.seed) overrides["train.seed"] = std::to_string(*a.seed);
  if (a.learning_rate) overrides["train.learning_rate"] = *a.learning_rate;
  if (a.noise) overrides["sensor.noise_frac"] = *a.noise;
  if (a.threads) overrides["train.threads"] = std::to_string(*a.threads);
  if (a.binarize) overrides["train.binarize"] = "true";

  std::optional<fs::path> config_path;
  if (a.config) config_path = *a.config;
  const ExperimentConfig cfg = load_config(config_path, overrides);
  const RunManifest manifest = run_experiment(cfg);

  std::cout << manifest_text(manifest);
  if (manifest.status == RunStatus::kDiverged) {
    std::cerr << "training diverged: " << manifest.message << '\n';
  }
  return exit_code(manifest);
}

struct EvalArgs {
  std::string checkpoint;
  std::optional<std::string> architecture;
  std::optional<double> noise;
  std::size_t per_glyph = 25;
  std::uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  EvalOptions opts;
  if (a.architecture) opts.expect = architecture_from_name(*a.architecture);
  opts.noise_frac = a.noise;
  opts.per_glyph = a.per_glyph;
  opts.seed = a.seed;
  std::cout << format_eval_report(evaluate_checkpoint(ck, opts));
  return kExitOk;
}

struct TraceArgs {
  std::string checkpoint;
  std::string letter = "InvZ";
  std::optional<std::string> trace_csv;
  std::optional<std::string> waveform_csv;
  std::string energy_mode = "calibrated";
};

int cmd_trace(const TraceArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Glyph glyph = glyph_from_name(a.letter);
  const PhaseTiming timing;
  Trace trace;
  std::vector<double> outputs;
  const ArrayTopology* topology = nullptr;
  std::visit(
      [&](const auto& net) {
        using Net = std::decay_t<decltype(net)>;
        topology = &net.topology();
        if constexpr (std::is_same_v<Net, FcClassifier>) {
          outputs = net.analog_outputs(encode_capacitive(letter(glyph, 3), net.params()).c_i, &trace, timing);
        } else if constexpr (std::is_same_v<Net, Autoencoder>) {
          outputs = net.analog_split(encode_capacitive(letter(glyph, 3), net.params()).c_i, &trace, timing).u;
        } else {
          const Matrix fm = net.feature_map(encode_capacitive(letter(glyph, 5), net.params()).c_i, &trace, timing);
          outputs.assign(fm.flat().begin(), fm.flat().end());
        }
      },
      ck.model);

  if (a.trace_csv) {
    std::ofstream os(*a.trace_csv, std::ios::binary);
    if (!os) throw UsageError(fmt::format("cannot write '{}'", *a.trace_csv));
    write_trace_csv(os, trace);
  }
  if (a.waveform_csv) {
    std::ofstream os(*a.waveform_csv, std::ios::binary);
    if (!os) throw UsageError(fmt::format("cannot write '{}'", *a.waveform_csv));
    write_waveform_csv(os, assemble_waveform(trace, timing));
  }
  EnergyModel energy;
  energy.mode = energy_mode_from_name(a.energy_mode);
  const auto report = metrics_report(NetworkSpec::defaults(ck.architecture()), *topology, timing, energy, &trace);
  std::cout << fmt::format("letter {}\n", glyph_name(glyph));
  for (std::size_t i = 0; i < outputs.size(); ++i) std::cout << fmt::format("U_{} {:+.6f}\n", i + 1, outputs[i]);
  std::cout << metrics_to_json(report);
  return kExitOk;
}

struct ScheduleArgs {
  std::size_t rows = 5;
  std::size_t cols = 5;
  std::size_t kernel = 3;
};

int cmd_schedule(const ScheduleArgs& a) {
  const ConvSchedule schedule = schedule_conv(a.rows, a.cols, a.kernel);
  const ResourceReport res = resource_report(a.rows, a.cols, a.kernel);
  std::cout << schedule_to_json(schedule);
  std::cout << fmt::format("dacs {} adcs {} steps {} latency_ns {}\n", res.dacs, res.adcs, res.steps,
                           static_cast<double>(res.steps) * PhaseTiming{}.total());
  return kExitOk;
}

struct FixturesArgs {
  std::string out_dir = "fixtures";
};

int cmd_fixtures(const FixturesArgs& a) {
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const SensorParams params;
  for (std::size_t res : {3u, 5u}) {
    for (const auto& img : letter_patterns(res)) {
      const std::string stem = fmt::format("{}_{}x{}", glyph_name(img.glyph), res, res);
      std::ofstream bitmap(dir / (stem + ".txt"), std::ios::binary);
      bitmap << format_bitmap(img);
      std::ofstream csv(dir / (stem + "_pf.csv"), std::ios::binary);
      write_capacitance_csv(csv, encode_capacitive(img, params).c_i);
      std::cout << render_ascii(img) << '\n';
    }
  }
  std::cout << fmt::format("wrote fixtures to {}\n", dir.string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capacitive in-sensor MAC array simulator and hardware-in-the-loop trainer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(library_version()));

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a network and write artifacts");
  t->add_option("-c,--config", train.config, "Config file (key = value lines)");
  t->add_option("--set", train.set, "Override a config key, e.g. --set train.epochs=50");
  t->add_option("-a,--architecture", train.architecture, "fc_classifier, autoencoder or cnn_classifier");
  t->add_option("-o,--output-dir", train.output_dir, "Artifact directory");
  t->add_option("--emit", train.emit, "Comma list of history,waveform,reconstruction,schedule,checkpoint (or none)");
  t->add_option("--epochs", train.epochs, "Training epochs");
  t->add_option("--seed", train.seed, "Run seed");
  t->add_option("--lr", train.learning_rate, "Learning rate");
  t->add_option("--noise", train.noise, "Noise as a fraction of the nominal capacitance");
  t->add_option("--threads", train.threads, "Worker threads for the per-batch forward passes");
  t->add_flag("--binarize", train.binarize, "Program binarized +-1 V weights (fc_classifier)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a fresh noisy batch");
  e->add_option("checkpoint", eval.checkpoint, "Checkpoint file")->required();
  e->add_option("-a,--architecture", eval.architecture, "Fail unless the checkpoint holds this architecture");
  e->add_option("--noise", eval.noise, "Override the sensor noise fraction");
  e->add_option("--per-glyph", eval.per_glyph, "Noisy samples per letter")->check(CLI::PositiveNumber);
  e->add_option("--seed", eval.seed, "Evaluation seed");

  TraceArgs trace;
  auto* tr = app.add_subcommand("trace", "Run one letter through the array and dump the MAC phases");
  tr->add_option("checkpoint", trace.checkpoint, "Checkpoint file")->required();
  tr->add_option("-l,--letter", trace.letter, "H, L, Y or InvZ");
  tr->add_option("--trace-csv", trace.trace_csv, "Write the per-unit phase trace here");
  tr->add_option("--waveform-csv", trace.waveform_csv, "Write the switch/output waveform here");
  tr->add_option("--energy", trace.energy_mode, "calibrated or charge_based");

  ScheduleArgs sched;
  auto* s = app.add_subcommand("schedule", "Print the convolution window schedule");
  s->add_option("--rows", sched.rows, "Array rows");
  s->add_option("--cols", sched.cols, "Array columns");
  s->add_option("--kernel", sched.kernel, "Kernel size");

  FixturesArgs fix;
  auto* f = app.add_subcommand("fixtures", "Write the canonical glyph bitmaps and capacitance images");
  f->add_option("-o,--output-dir", fix.out_dir, "Destination directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitConfig;
  }

  try {
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
    if (tr->parsed()) return cmd_trace(trace);
    if (s->parsed()) return cmd_schedule(sched);
    if (f->parsed()) return cmd_fixtures(fix);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitConfig;
  } catch (const std::logic_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return kExitOk;
}
