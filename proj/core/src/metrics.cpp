#include "capsense/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "capsense/error.hpp"

namespace capsense {

std::string_view energy_mode_name(EnergyMode mode) {
  return mode == EnergyMode::kChargeBased ? "charge_based" : "calibrated";
}

EnergyMode energy_mode_from_name(std::string_view name) {
  if (name == "calibrated") return EnergyMode::kCalibrated;
  if (name == "charge_based") return EnergyMode::kChargeBased;
  throw UsageError(fmt::format("unknown energy mode '{}' (expected calibrated or charge_based)", name));
}

void EnergyModel::validate() const {
  if (!(e_per_classification_nj >= 0.0) || !std::isfinite(e_per_classification_nj)) {
    throw DomainError("energy per classification must be finite and >= 0");
  }
  if (!(supply_v > 0.0) || !std::isfinite(supply_v)) throw DomainError("supply voltage must be positive");
}

std::size_t array_cycles(const NetworkSpec& spec, const ArrayTopology& topology) {
  if (topology.kind == ArrayKind::kConvolution || spec.kernel != 0) {
    const std::size_t k = spec.kernel != 0 ? spec.kernel : topology.kernel;
    if (k == 0 || topology.cols < k) throw DomainError("array_cycles: array narrower than kernel");
    return topology.cols - k + 1;
  }
  return fc_cycles(topology, spec.outputs);
}

double latency_ns(const NetworkSpec& spec, const PhaseTiming& timing, const ArrayTopology& topology) {
  timing.validate();
  return static_cast<double>(array_cycles(spec, topology)) * timing.total();
}

double trace_energy_nj(const Trace& trace, double supply_v) {
  double pj = 0.0;
  for (const auto& r : trace) {
    if (r.phase == Phase::kCharge) pj += std::abs(r.charge_pc) * std::abs(r.voltage_v);
  }
  return pj * supply_v * supply_v / 1000.0;
}

double energy_nj(const NetworkSpec& spec, const ArrayTopology& topology, const EnergyModel& model,
                 const Trace* trace) {
  model.validate();
  if (model.mode == EnergyMode::kCalibrated) {
    return model.e_per_classification_nj * static_cast<double>(array_cycles(spec, topology));
  }
  if (trace == nullptr) throw UsageError("charge_based energy needs a MAC trace");
  return trace_energy_nj(*trace, model.supply_v);
}

std::vector<WaveformSample> assemble_waveform(const Trace& trace, const PhaseTiming& timing) {
  if (trace.empty()) throw UsageError("assemble_waveform: empty trace");
  timing.validate();

  // Phase starts in time order, and when each output's line settles.
  std::map<double, Phase> phase_at;
  std::map<std::size_t, std::pair<double, double>> settled;  // bank -> (time, U)
  for (const auto& r : trace) {
    phase_at.emplace(r.time_ns, r.phase);
    if (r.phase == Phase::kSum) settled.emplace(r.bank, std::make_pair(r.time_ns, r.voltage_v));
  }

  std::vector<WaveformSample> out;
  auto emit = [&](double t, Phase phase) {
    const Switches sw = phase_switches(phase);
    out.push_back({t, "CL", sw.cl ? 1.0 : 0.0});
    out.push_back({t, "MUL", sw.mul ? 1.0 : 0.0});
    out.push_back({t, "CON", sw.con ? 1.0 : 0.0});
    out.push_back({t, "ADD", sw.add ? 1.0 : 0.0});
    for (const auto& [bank, tu] : settled) {
      out.push_back({t, fmt::format("U_{}", bank + 1), t >= tu.first ? tu.second : 0.0});
    }
  };
  for (const auto& [t, phase] : phase_at) emit(t, phase);
  const auto& [t_last, phase_last] = *phase_at.rbegin();
  emit(t_last + timing.duration(phase_last), phase_last);
  return out;
}

std::vector<double> final_outputs(const std::vector<WaveformSample>& waveform) {
  std::map<std::size_t, double> last;
  for (const auto& s : waveform) {
    if (s.signal.rfind("U_", 0) == 0) last[std::stoul(s.signal.substr(2))] = s.value;
  }
  std::vector<double> out;
  for (const auto& [k, v] : last) out.push_back(v);
  return out;
}

void write_waveform_csv(std::ostream& os, const std::vector<WaveformSample>& waveform) {
  os << "time_ns,signal,value\n";
  for (const auto& s : waveform) os << fmt::format("{},{},{}\n", s.time_ns, s.signal, s.value);
}

MetricsReport metrics_report(const NetworkSpec& spec, const ArrayTopology& topology,
                             const PhaseTiming& timing, const EnergyModel& model,
                             const Trace* trace) {
  MetricsReport r;
  r.cycles = array_cycles(spec, topology);
  r.latency_ns = latency_ns(spec, timing, topology);
  r.energy_nj = energy_nj(spec, topology, model, trace);
  if (topology.kind == ArrayKind::kConvolution) {
    const auto res = resource_report(topology.rows, topology.cols, topology.kernel);
    r.dacs = res.dacs;
    r.adcs = res.adcs;
  } else {
    r.dacs = topology.banks() * topology.pixels();
    r.adcs = topology.banks();
  }
  return r;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["latency_ns"] = report.latency_ns;
  j["energy_nJ"] = report.energy_nj;
  j["cycles"] = report.cycles;
  j["dacs"] = report.dacs;
  j["adcs"] = report.adcs;
  return j.dump(2) + "\n";
}

}  // namespace capsense
