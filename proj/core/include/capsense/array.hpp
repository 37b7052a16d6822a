#pragma once

// Sensor arrays built from pixel MAC units.
//
// FC wiring: every pixel holds `banks` subpixels; subpixel m of every pixel is
// tied to output line m, so all banks evaluate in the same array cycle. Output
// rows beyond the bank count are serialized over extra cycles.
//
// Convolution wiring: every pixel holds kernel^2 subpixels. Subpixel k of a
// pixel serves the window in which that pixel sits at kernel position k, so no
// subpixel is shared by two windows. Windows at vertical offset r read out
// through ADC r; each horizontal position is one scheduled step, left to right.

#include <cstddef>
#include <string>
#include <vector>

#include "capsense/device.hpp"
#include "capsense/matrix.hpp"

namespace capsense {

struct PixelCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

enum class ArrayKind : std::uint8_t { kFullyConnected, kConvolution };

struct ArrayTopology {
  ArrayKind kind = ArrayKind::kFullyConnected;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t subpixels_per_pixel = 0;
  std::size_t kernel = 0;  // convolution only
  // bank index -> pixels read by that bank, in fan-in order. For convolution
  // a bank is one window and the list is in kernel (row-major) order.
  std::vector<std::vector<PixelCoord>> bank_wiring;

  std::size_t banks() const { return bank_wiring.size(); }
  std::size_t pixels() const { return rows * cols; }
  /// Subpixel index of the i-th pixel in `bank`'s list.
  std::size_t subpixel_of(std::size_t bank, std::size_t i) const {
    return kind == ArrayKind::kFullyConnected ? bank : i;
  }
};

struct WindowAssignment {
  std::size_t origin_row = 0;
  std::size_t origin_col = 0;
  std::size_t adc = 0;
  friend bool operator==(const WindowAssignment&, const WindowAssignment&) = default;
};

struct ConvSchedule {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t kernel = 0;
  std::vector<std::vector<WindowAssignment>> steps;

  std::size_t window_count() const;
  std::size_t out_rows() const { return rows - kernel + 1; }
  std::size_t out_cols() const { return cols - kernel + 1; }
};

struct ResourceReport {
  std::size_t dacs = 0;
  std::size_t adcs = 0;
  std::size_t steps = 0;
  friend bool operator==(const ResourceReport&, const ResourceReport&) = default;
};

ArrayTopology build_fc_array(std::size_t rows, std::size_t cols, std::size_t banks);

/// Array cycles needed to produce `outputs` FC outputs on `topology`.
std::size_t fc_cycles(const ArrayTopology& topology, std::size_t outputs);

/// Per-pixel series capacitance of an induced-capacitance image.
Matrix series_image(const Matrix& c_i_image, double c0_pf);

/// FC layer through the array: U_m = mac over bank (m mod banks) with weight
/// row m. `weights` is M x (rows*cols) in row-major pixel order, already
/// within [-1, 1]. When `trace` is given every unit's phases are recorded;
/// output m lands in cycle m / banks.
std::vector<double> fc_forward(const ArrayTopology& topology, const Matrix& c_i_image,
                               const Matrix& weights, const SensorParams& params,
                               Trace* trace = nullptr, const PhaseTiming& timing = {});

/// Same as fc_forward but on a precomputed series-capacitance image.
std::vector<double> fc_forward_series(const ArrayTopology& topology, const Matrix& c_series,
                                      const Matrix& weights, double c0_pf,
                                      Trace* trace = nullptr, const PhaseTiming& timing = {});

ConvSchedule schedule_conv(std::size_t rows, std::size_t cols, std::size_t kernel = 3);

ArrayTopology build_conv_array(std::size_t rows, std::size_t cols, std::size_t kernel = 3);

/// Stride-1, unpadded cross-correlation of the series image with the shared
/// kernel voltages, executed window by window in schedule order.
Matrix conv_forward(const ArrayTopology& topology, const ConvSchedule& schedule,
                    const Matrix& c_i_image, std::span<const double> kernel_weights,
                    const SensorParams& params, Trace* trace = nullptr,
                    const PhaseTiming& timing = {});

Matrix conv_forward_series(const ArrayTopology& topology, const ConvSchedule& schedule,
                           const Matrix& c_series, std::span<const double> kernel_weights,
                           double c0_pf, Trace* trace = nullptr, const PhaseTiming& timing = {});

/// (kernel^2 DACs, one ADC per array row, cols - kernel + 1 steps).
ResourceReport resource_report(std::size_t rows, std::size_t cols, std::size_t kernel = 3);

/// Pretty-printed JSON dump of the steps, windows and ADC mapping.
std::string schedule_to_json(const ConvSchedule& schedule);

/// Pretty-printed JSON dump of the bank wiring.
std::string topology_to_json(const ArrayTopology& topology);

}  // namespace capsense
