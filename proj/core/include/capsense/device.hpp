#pragma once

// Behavioral model of one capacitive sensing pixel: the sensor capacitor C0
// in series with the object-induced capacitance C_I, and the four-phase
// charge-domain multiply-and-accumulate (MAC) cycle driven by the CL, MUL,
// CON and ADD transmission gates. Gates are ideal: no charge injection,
// leakage or settling.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace capsense {

/// Seeded engine used everywhere randomness appears.
using Rng = std::mt19937_64;

// Independent streams derived from one run seed.
inline constexpr std::uint32_t kStreamInit = 0;
inline constexpr std::uint32_t kStreamTrain = 1;
inline constexpr std::uint32_t kStreamEval = 2;
inline constexpr std::uint32_t kStreamArtifacts = 3;

Rng seeded_rng(std::uint64_t seed, std::uint32_t stream);

enum class NoiseMode : std::uint8_t {
  kPerClass,  // sigma = noise_frac * (C_IH or C_IL, whichever the pixel is)
  kGlobal,    // sigma = noise_frac * C_IH for every pixel
};

std::string_view noise_mode_name(NoiseMode mode);    // "per_class" or "global"
NoiseMode noise_mode_from_name(std::string_view name);  // throws UsageError

struct SensorParams {
  double c0_pf = 72.0;
  double c_ih_pf = 500.0;
  double c_il_pf = 16.77;
  double noise_frac = 0.2;
  NoiseMode noise_mode = NoiseMode::kPerClass;
  // Noisy capacitances are clamped here so the series formula stays defined.
  double noise_floor_pf = 0.01;

  /// Throws DomainError if any invariant is violated.
  void validate() const;

  /// Series capacitance of an "inside" pixel (C_H).
  double c_high_pf() const;
  /// Series capacitance of an "outside" pixel (C_L).
  double c_low_pf() const;
};

enum class Phase : std::uint8_t { kClear = 0, kCharge = 1, kTransfer = 2, kSum = 3 };

inline constexpr std::array<Phase, 4> kPhaseOrder = {Phase::kClear, Phase::kCharge,
                                                     Phase::kTransfer, Phase::kSum};

std::string_view phase_name(Phase phase);

/// Gate levels, ordered (CL, MUL, CON, ADD).
struct Switches {
  bool cl = false;
  bool mul = false;
  bool con = false;
  bool add = false;

  friend constexpr bool operator==(const Switches&, const Switches&) = default;
};

constexpr Switches phase_switches(Phase phase) {
  switch (phase) {
    case Phase::kClear:
      return {.cl = true, .mul = false, .con = true, .add = true};
    case Phase::kCharge:
      return {.cl = false, .mul = true, .con = false, .add = false};
    case Phase::kTransfer:
      return {.cl = false, .mul = false, .con = true, .add = false};
    case Phase::kSum:
      return {.cl = false, .mul = false, .con = true, .add = true};
  }
  return {};
}

/// Per-phase durations of one MAC cycle, in ns. Defaults split 350 ns evenly.
struct PhaseTiming {
  double clear_ns = 87.5;
  double charge_ns = 87.5;
  double transfer_ns = 87.5;
  double sum_ns = 87.5;

  double duration(Phase phase) const;
  double total() const { return clear_ns + charge_ns + transfer_ns + sum_ns; }
  /// Offset of the phase start from the cycle start.
  double offset(Phase phase) const;
  void validate() const;
};

/// C_I * C0 / (C_I + C0). Throws DomainError on non-positive input.
double series_capacitance(double c_i_pf, double c0_pf);

/// Inverse of series_capacitance: C_I = C * C0 / (C0 - C). Requires 0 < C < C0.
double induced_from_series(double c_series_pf, double c0_pf);

/// Noisy copy of a clean induced capacitance. delta ~ Normal(0, (frac*nominal)^2);
/// the result is clamped at floor_pf. No random draw is made when frac == 0.
double apply_noise(double c_i_clean_pf, double nominal_pf, double noise_frac, Rng& rng,
                   double floor_pf = 0.01);

/// One snapshot of a unit after a phase completes.
struct TraceRecord {
  std::size_t bank = 0;  // output index the unit contributes to
  std::size_t unit = 0;  // index within the bank (0..N-1)
  std::size_t fan_in = 0;
  Phase phase = Phase::kClear;
  Switches switches;
  double charge_pc = 0.0;
  // Charge: the drive (weight) voltage V_n. Transfer: U_o,n. Sum: U_out.
  double voltage_v = 0.0;
  double time_ns = 0.0;  // phase start
};

using Trace = std::vector<TraceRecord>;

/// Opt-in trace capture for mac_evaluate.
struct TraceCapture {
  Trace* out = nullptr;
  std::size_t bank = 0;
  double start_ns = 0.0;
  PhaseTiming timing{};
};

/// State machine of a single pixel MAC unit. Phases must be driven in the
/// order Clear, Charge, Transfer, Sum; anything else throws UsageError.
class MacUnit {
 public:
  MacUnit(double c_series_pf, double c0_pf);

  void clear();
  void charge(double drive_v);
  void transfer();
  /// Closes ADD onto the shared summing line settled at `line_voltage_v`.
  void sum(double line_voltage_v);

  Phase phase() const { return phase_; }
  Switches switches() const { return phase_switches(phase_); }
  double stored_charge_pc() const { return charge_pc_; }
  double plate_voltage_v() const { return plate_v_; }
  double c_series_pf() const { return c_series_pf_; }

 private:
  void expect(Phase previous, Phase next) const;

  double c_series_pf_;
  double c0_pf_;
  Phase phase_ = Phase::kSum;  // idle; the next legal phase is Clear
  double charge_pc_ = 0.0;
  double plate_v_ = 0.0;
};

/// Runs one MAC cycle over N units: returns sum(C_n * V_n) / (N * C0).
/// Throws ShapeError on length mismatch or empty input, RangeError when
/// any |V_n| > 1.
double mac_evaluate(std::span<const double> c_series_pf, std::span<const double> drive_v,
                    double c0_pf, const TraceCapture* capture = nullptr);

/// Writes the trace as CSV with header
/// unit_index,phase,CL,MUL,CON,ADD,charge_pC,voltage_V,time_ns.
/// unit_index is global: bank * fan_in + unit.
void write_trace_csv(std::ostream& os, const Trace& trace);

}  // namespace capsense
