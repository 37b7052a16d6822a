#include "capsense/device.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "capsense/error.hpp"

namespace capsense {

Rng seeded_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  return Rng(seq);
}

std::string_view noise_mode_name(NoiseMode mode) {
  return mode == NoiseMode::kGlobal ? "global" : "per_class";
}

NoiseMode noise_mode_from_name(std::string_view name) {
  if (name == "per_class") return NoiseMode::kPerClass;
  if (name == "global") return NoiseMode::kGlobal;
  throw UsageError(fmt::format("unknown noise mode '{}' (expected per_class or global)", name));
}

void SensorParams::validate() const {
  if (!(c0_pf > 0.0) || !(c_ih_pf > 0.0) || !(c_il_pf > 0.0)) {
    throw DomainError("sensor capacitances must be positive");
  }
  if (!(c_ih_pf > c_il_pf)) {
    throw DomainError("c_ih must exceed c_il");
  }
  if (!(noise_frac >= 0.0) || !std::isfinite(noise_frac)) {
    throw DomainError("noise_frac must be a finite value >= 0");
  }
  if (!(noise_floor_pf > 0.0)) {
    throw DomainError("noise_floor must be positive");
  }
}

double SensorParams::c_high_pf() const { return series_capacitance(c_ih_pf, c0_pf); }

double SensorParams::c_low_pf() const { return series_capacitance(c_il_pf, c0_pf); }

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::kClear:
      return "clear";
    case Phase::kCharge:
      return "charge";
    case Phase::kTransfer:
      return "transfer";
    case Phase::kSum:
      return "sum";
  }
  return "?";
}

double PhaseTiming::duration(Phase phase) const {
  switch (phase) {
    case Phase::kClear:
      return clear_ns;
    case Phase::kCharge:
      return charge_ns;
    case Phase::kTransfer:
      return transfer_ns;
    case Phase::kSum:
      return sum_ns;
  }
  return 0.0;
}

double PhaseTiming::offset(Phase phase) const {
  double t = 0.0;
  for (Phase p : kPhaseOrder) {
    if (p == phase) break;
    t += duration(p);
  }
  return t;
}

void PhaseTiming::validate() const {
  for (Phase p : kPhaseOrder) {
    if (!(duration(p) > 0.0)) {
      throw DomainError(fmt::format("phase duration for {} must be positive", phase_name(p)));
    }
  }
}

double series_capacitance(double c_i_pf, double c0_pf) {
  if (!(c_i_pf > 0.0) || !(c0_pf > 0.0)) {
    throw DomainError("series_capacitance requires positive capacitances");
  }
  return c_i_pf * c0_pf / (c_i_pf + c0_pf);
}

double induced_from_series(double c_series_pf, double c0_pf) {
  if (!(c_series_pf > 0.0) || !(c_series_pf < c0_pf)) {
    throw DomainError("induced_from_series requires 0 < C < C0");
  }
  return c_series_pf * c0_pf / (c0_pf - c_series_pf);
}

double apply_noise(double c_i_clean_pf, double nominal_pf, double noise_frac, Rng& rng,
                   double floor_pf) {
  if (!(noise_frac >= 0.0)) {
    throw DomainError("noise_frac must be >= 0");
  }
  if (noise_frac == 0.0) return c_i_clean_pf;
  std::normal_distribution<double> delta(0.0, noise_frac * nominal_pf);
  const double noisy = c_i_clean_pf + delta(rng);
  return noisy < floor_pf ? floor_pf : noisy;
}

MacUnit::MacUnit(double c_series_pf, double c0_pf) : c_series_pf_(c_series_pf), c0_pf_(c0_pf) {
  if (!(c_series_pf > 0.0) || !(c0_pf > 0.0)) {
    throw DomainError("MacUnit requires positive capacitances");
  }
}

void MacUnit::expect(Phase previous, Phase next) const {
  if (phase_ != previous) {
    throw UsageError(fmt::format("MacUnit: {} may not follow {}", phase_name(next),
                                 phase_name(phase_)));
  }
}

void MacUnit::clear() {
  expect(Phase::kSum, Phase::kClear);
  phase_ = Phase::kClear;
  charge_pc_ = 0.0;
  plate_v_ = 0.0;
}

void MacUnit::charge(double drive_v) {
  expect(Phase::kClear, Phase::kCharge);
  phase_ = Phase::kCharge;
  // pF * V = pC
  charge_pc_ = c_series_pf_ * drive_v;
  plate_v_ = drive_v;
}

void MacUnit::transfer() {
  expect(Phase::kCharge, Phase::kTransfer);
  phase_ = Phase::kTransfer;
  plate_v_ = charge_pc_ / c0_pf_;
}

void MacUnit::sum(double line_voltage_v) {
  expect(Phase::kTransfer, Phase::kSum);
  phase_ = Phase::kSum;
  plate_v_ = line_voltage_v;
  charge_pc_ = c0_pf_ * line_voltage_v;
}

namespace {

void record(const TraceCapture* capture, std::size_t unit, std::size_t fan_in, const MacUnit& u) {
  if (capture == nullptr || capture->out == nullptr) return;
  capture->out->push_back(TraceRecord{
      .bank = capture->bank,
      .unit = unit,
      .fan_in = fan_in,
      .phase = u.phase(),
      .switches = u.switches(),
      .charge_pc = u.stored_charge_pc(),
      .voltage_v = u.plate_voltage_v(),
      .time_ns = capture->start_ns + capture->timing.offset(u.phase()),
  });
}

}  // namespace

double mac_evaluate(std::span<const double> c_series_pf, std::span<const double> drive_v,
                    double c0_pf, const TraceCapture* capture) {
  if (c_series_pf.size() != drive_v.size()) {
    throw ShapeError(fmt::format("mac_evaluate: {} capacitances vs {} voltages",
                                 c_series_pf.size(), drive_v.size()));
  }
  if (c_series_pf.empty()) {
    throw ShapeError("mac_evaluate: empty input");
  }
  for (double v : drive_v) {
    if (!(std::abs(v) <= 1.0)) {
      throw RangeError(fmt::format("mac_evaluate: weight voltage {} outside [-1, 1]", v));
    }
  }
  const std::size_t n = c_series_pf.size();

  if (capture == nullptr) {
    // Same arithmetic as the phase machine below without the bookkeeping.
    double total_pc = 0.0;
    for (std::size_t i = 0; i < n; ++i) total_pc += c_series_pf[i] * drive_v[i];
    return total_pc / (static_cast<double>(n) * c0_pf);
  }

  std::vector<MacUnit> units;
  units.reserve(n);
  for (double c : c_series_pf) units.emplace_back(c, c0_pf);

  for (std::size_t i = 0; i < n; ++i) {
    units[i].clear();
    record(capture, i, n, units[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    units[i].charge(drive_v[i]);
    record(capture, i, n, units[i]);
  }
  double total_pc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    units[i].transfer();
    record(capture, i, n, units[i]);
    total_pc += units[i].stored_charge_pc();
  }
  // N equal C0 plates share the total charge.
  const double line_v = total_pc / (static_cast<double>(n) * c0_pf);
  for (std::size_t i = 0; i < n; ++i) {
    units[i].sum(line_v);
    record(capture, i, n, units[i]);
  }
  return line_v;
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << "unit_index,phase,CL,MUL,CON,ADD,charge_pC,voltage_V,time_ns\n";
  for (const auto& r : trace) {
    os << fmt::format("{},{},{},{},{},{},{},{},{}\n", r.bank * r.fan_in + r.unit,
                      phase_name(r.phase), int(r.switches.cl), int(r.switches.mul),
                      int(r.switches.con), int(r.switches.add), r.charge_pc, r.voltage_v,
                      r.time_ns);
  }
}

}  // namespace capsense
