#pragma once

// Latency and energy of in-sensor inference, and waveform tables built from
// MAC phase traces.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "capsense/array.hpp"
#include "capsense/device.hpp"
#include "capsense/network.hpp"

namespace capsense {

enum class EnergyMode : std::uint8_t {
  kCalibrated,   // fixed energy per array cycle
  kChargeBased,  // sum over Charge phases of |Q_n| * |V_n|, scaled by supply_v^2
};

std::string_view energy_mode_name(EnergyMode mode);     // "calibrated" or "charge_based"
EnergyMode energy_mode_from_name(std::string_view name);  // throws UsageError

struct EnergyModel {
  EnergyMode mode = EnergyMode::kCalibrated;
  double e_per_classification_nj = 0.9;
  // Physical voltage of a unit drive. Charge-based energy is a lower-bound
  // estimate; it ignores the DACs, ADCs and switch losses.
  double supply_v = 1.0;

  void validate() const;
};

/// Sequential array cycles for one inference: ceil(outputs / banks) for FC
/// layouts, cols - kernel + 1 for convolution.
std::size_t array_cycles(const NetworkSpec& spec, const ArrayTopology& topology);

double latency_ns(const NetworkSpec& spec, const PhaseTiming& timing,
                  const ArrayTopology& topology);

/// Calibrated mode scales by array cycles. Charge-based mode needs `trace`
/// (UsageError otherwise) and ignores the network description.
double energy_nj(const NetworkSpec& spec, const ArrayTopology& topology, const EnergyModel& model,
                 const Trace* trace = nullptr);

/// Charge-based energy of a trace alone, in nJ.
double trace_energy_nj(const Trace& trace, double supply_v = 1.0);

struct WaveformSample {
  double time_ns = 0.0;
  std::string signal;  // CL, MUL, CON, ADD or U_k
  double value = 0.0;
};

/// Piecewise-constant table: one row per signal at every phase boundary and
/// one final row per signal at the end of the last phase. Gate levels are
/// 0/1. U_k (k = trace bank + 1) is 0 until its Sum phase, then holds the
/// summed line voltage. Throws UsageError on an empty trace.
std::vector<WaveformSample> assemble_waveform(const Trace& trace, const PhaseTiming& timing);

/// Last value of every U_k, in k order.
std::vector<double> final_outputs(const std::vector<WaveformSample>& waveform);

/// Header time_ns,signal,value.
void write_waveform_csv(std::ostream& os, const std::vector<WaveformSample>& waveform);

struct MetricsReport {
  double latency_ns = 0.0;
  double energy_nj = 0.0;
  std::size_t cycles = 0;
  std::size_t dacs = 0;
  std::size_t adcs = 0;
};

/// FC layouts drive one DAC per subpixel weight and read one ADC per bank;
/// convolution uses resource_report.
MetricsReport metrics_report(const NetworkSpec& spec, const ArrayTopology& topology,
                             const PhaseTiming& timing, const EnergyModel& model,
                             const Trace* trace = nullptr);

/// {"latency_ns", "energy_nJ", "cycles", "dacs", "adcs"}.
std::string metrics_to_json(const MetricsReport& report);

}  // namespace capsense
