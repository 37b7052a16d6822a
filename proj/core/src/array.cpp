#include "capsense/array.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "capsense/error.hpp"

namespace capsense {

std::size_t ConvSchedule::window_count() const {
  std::size_t n = 0;
  for (const auto& step : steps) n += step.size();
  return n;
}

ArrayTopology build_fc_array(std::size_t rows, std::size_t cols, std::size_t banks) {
  if (rows == 0 || cols == 0) throw DomainError("build_fc_array: zero array dimension");
  if (banks == 0) throw DomainError("build_fc_array: at least one bank is required");

  ArrayTopology topo;
  topo.kind = ArrayKind::kFullyConnected;
  topo.rows = rows;
  topo.cols = cols;
  topo.subpixels_per_pixel = banks;
  topo.bank_wiring.resize(banks);
  for (auto& wiring : topo.bank_wiring) {
    wiring.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) wiring.push_back({r, c});
    }
  }
  return topo;
}

std::size_t fc_cycles(const ArrayTopology& topology, std::size_t outputs) {
  if (topology.banks() == 0) throw DomainError("fc_cycles: topology has no banks");
  return (outputs + topology.banks() - 1) / topology.banks();
}

Matrix series_image(const Matrix& c_i_image, double c0_pf) {
  Matrix out(c_i_image.rows(), c_i_image.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.flat()[i] = series_capacitance(c_i_image.flat()[i], c0_pf);
  }
  return out;
}

std::vector<double> fc_forward_series(const ArrayTopology& topology, const Matrix& c_series,
                                      const Matrix& weights, double c0_pf, Trace* trace,
                                      const PhaseTiming& timing) {
  if (topology.kind != ArrayKind::kFullyConnected) {
    throw UsageError("fc_forward: topology is not FC-wired");
  }
  if (c_series.rows() != topology.rows || c_series.cols() != topology.cols) {
    throw ShapeError(fmt::format("fc_forward: image is {}x{}, array is {}x{}", c_series.rows(),
                                 c_series.cols(), topology.rows, topology.cols));
  }
  if (weights.cols() != topology.pixels() || weights.rows() == 0) {
    throw ShapeError(fmt::format("fc_forward: weights are {}x{}, expected Mx{}", weights.rows(),
                                 weights.cols(), topology.pixels()));
  }

  const std::size_t n = topology.pixels();
  const std::size_t banks = topology.banks();
  std::vector<double> outputs(weights.rows());
  std::vector<double> gathered(n);
  for (std::size_t m = 0; m < weights.rows(); ++m) {
    const std::size_t bank = m % banks;
    const auto& wiring = topology.bank_wiring[bank];
    for (std::size_t i = 0; i < n; ++i) gathered[i] = c_series(wiring[i].row, wiring[i].col);

    if (trace != nullptr) {
      const TraceCapture capture{.out = trace,
                                 .bank = m,
                                 .start_ns = static_cast<double>(m / banks) * timing.total(),
                                 .timing = timing};
      outputs[m] = mac_evaluate(gathered, weights.row(m), c0_pf, &capture);
    } else {
      outputs[m] = mac_evaluate(gathered, weights.row(m), c0_pf);
    }
  }
  return outputs;
}

std::vector<double> fc_forward(const ArrayTopology& topology, const Matrix& c_i_image,
                               const Matrix& weights, const SensorParams& params, Trace* trace,
                               const PhaseTiming& timing) {
  return fc_forward_series(topology, series_image(c_i_image, params.c0_pf), weights,
                           params.c0_pf, trace, timing);
}

ConvSchedule schedule_conv(std::size_t rows, std::size_t cols, std::size_t kernel) {
  if (kernel == 0) throw DomainError("schedule_conv: kernel must be positive");
  if (rows < kernel || cols < kernel) {
    throw DomainError(
        fmt::format("schedule_conv: {}x{} array is smaller than kernel {}", rows, cols, kernel));
  }
  ConvSchedule sched;
  sched.rows = rows;
  sched.cols = cols;
  sched.kernel = kernel;
  sched.steps.resize(cols - kernel + 1);
  for (std::size_t c = 0; c < sched.steps.size(); ++c) {
    for (std::size_t r = 0; r + kernel <= rows; ++r) {
      sched.steps[c].push_back({.origin_row = r, .origin_col = c, .adc = r});
    }
  }
  return sched;
}

ArrayTopology build_conv_array(std::size_t rows, std::size_t cols, std::size_t kernel) {
  const ConvSchedule sched = schedule_conv(rows, cols, kernel);
  ArrayTopology topo;
  topo.kind = ArrayKind::kConvolution;
  topo.rows = rows;
  topo.cols = cols;
  topo.kernel = kernel;
  topo.subpixels_per_pixel = kernel * kernel;
  for (const auto& step : sched.steps) {
    for (const auto& w : step) {
      std::vector<PixelCoord> pixels;
      pixels.reserve(kernel * kernel);
      for (std::size_t dr = 0; dr < kernel; ++dr) {
        for (std::size_t dc = 0; dc < kernel; ++dc) {
          pixels.push_back({w.origin_row + dr, w.origin_col + dc});
        }
      }
      topo.bank_wiring.push_back(std::move(pixels));
    }
  }
  return topo;
}

Matrix conv_forward_series(const ArrayTopology& topology, const ConvSchedule& schedule,
                           const Matrix& c_series, std::span<const double> kernel_weights,
                           double c0_pf, Trace* trace, const PhaseTiming& timing) {
  if (topology.kind != ArrayKind::kConvolution) {
    throw UsageError("conv_forward: topology is not convolution-wired");
  }
  if (schedule.rows != topology.rows || schedule.cols != topology.cols ||
      schedule.kernel != topology.kernel) {
    throw ShapeError("conv_forward: schedule does not match topology");
  }
  if (c_series.rows() != topology.rows || c_series.cols() != topology.cols) {
    throw ShapeError(fmt::format("conv_forward: image is {}x{}, array is {}x{}", c_series.rows(),
                                 c_series.cols(), topology.rows, topology.cols));
  }
  const std::size_t taps = topology.kernel * topology.kernel;
  if (kernel_weights.size() != taps) {
    throw ShapeError(fmt::format("conv_forward: {} kernel weights, expected {}",
                                 kernel_weights.size(), taps));
  }

  Matrix out(schedule.out_rows(), schedule.out_cols());
  const std::size_t per_step = schedule.out_rows();
  std::vector<double> gathered(taps);
  for (std::size_t s = 0; s < schedule.steps.size(); ++s) {
    for (const auto& w : schedule.steps[s]) {
      const std::size_t bank = w.origin_col * per_step + w.origin_row;
      const auto& wiring = topology.bank_wiring.at(bank);
      for (std::size_t i = 0; i < taps; ++i) gathered[i] = c_series(wiring[i].row, wiring[i].col);
      if (trace != nullptr) {
        const TraceCapture capture{.out = trace,
                                   .bank = bank,
                                   .start_ns = static_cast<double>(s) * timing.total(),
                                   .timing = timing};
        out(w.origin_row, w.origin_col) = mac_evaluate(gathered, kernel_weights, c0_pf, &capture);
      } else {
        out(w.origin_row, w.origin_col) = mac_evaluate(gathered, kernel_weights, c0_pf);
      }
    }
  }
  return out;
}

Matrix conv_forward(const ArrayTopology& topology, const ConvSchedule& schedule,
                    const Matrix& c_i_image, std::span<const double> kernel_weights,
                    const SensorParams& params, Trace* trace, const PhaseTiming& timing) {
  return conv_forward_series(topology, schedule, series_image(c_i_image, params.c0_pf),
                             kernel_weights, params.c0_pf, trace, timing);
}

ResourceReport resource_report(std::size_t rows, std::size_t cols, std::size_t kernel) {
  const ConvSchedule sched = schedule_conv(rows, cols, kernel);
  return {.dacs = kernel * kernel, .adcs = rows, .steps = sched.steps.size()};
}

std::string schedule_to_json(const ConvSchedule& schedule) {
  nlohmann::ordered_json j;
  j["rows"] = schedule.rows;
  j["cols"] = schedule.cols;
  j["kernel"] = schedule.kernel;
  const auto res = resource_report(schedule.rows, schedule.cols, schedule.kernel);
  j["dacs"] = res.dacs;
  j["adcs"] = res.adcs;
  j["step_count"] = res.steps;
  j["window_count"] = schedule.window_count();
  auto steps = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < schedule.steps.size(); ++s) {
    nlohmann::ordered_json step;
    step["step"] = s;
    auto windows = nlohmann::ordered_json::array();
    for (const auto& w : schedule.steps[s]) {
      windows.push_back({{"origin_row", w.origin_row}, {"origin_col", w.origin_col}, {"adc", w.adc}});
    }
    step["windows"] = std::move(windows);
    steps.push_back(std::move(step));
  }
  j["steps"] = std::move(steps);
  return j.dump(2) + "\n";
}

std::string topology_to_json(const ArrayTopology& topology) {
  nlohmann::ordered_json j;
  j["kind"] = topology.kind == ArrayKind::kFullyConnected ? "fc" : "conv";
  j["rows"] = topology.rows;
  j["cols"] = topology.cols;
  j["subpixels_per_pixel"] = topology.subpixels_per_pixel;
  auto banks = nlohmann::ordered_json::array();
  for (std::size_t b = 0; b < topology.banks(); ++b) {
    auto pixels = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < topology.bank_wiring[b].size(); ++i) {
      const auto& p = topology.bank_wiring[b][i];
      pixels.push_back({p.row, p.col, topology.subpixel_of(b, i)});
    }
    banks.push_back({{"bank", b}, {"pixels", std::move(pixels)}});
  }
  j["banks"] = std::move(banks);
  return j.dump(2) + "\n";
}

}  // namespace capsense
