#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "capsense/device.hpp"
#include "capsense/error.hpp"

using namespace capsense;

namespace {

double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

double dot_oracle(const std::vector<double>& c, const std::vector<double>& v, double c0) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < c.size(); ++i) acc += static_cast<long double>(c[i]) * v[i];
  return static_cast<double>(acc / (static_cast<long double>(c.size()) * c0));
}

}  // namespace

TEST(SeriesCapacitance, InsideAndOutsidePixels) {
  // 500 * 72 / 572 and 16.77 * 72 / 588.77 worked by hand.
  EXPECT_NEAR(series_capacitance(500.0, 72.0), 36000.0 / 572.0, 1e-12);
  EXPECT_NEAR(series_capacitance(500.0, 72.0), 62.937, 5e-4);
  EXPECT_NEAR(series_capacitance(16.77, 72.0), 1207.44 / 88.77, 1e-12);
  EXPECT_NEAR(series_capacitance(16.77, 72.0), 13.602, 5e-4);
}

TEST(SeriesCapacitance, RejectsNonPositive) {
  EXPECT_THROW(series_capacitance(0.0, 72.0), DomainError);
  EXPECT_THROW(series_capacitance(10.0, -1.0), DomainError);
}

TEST(SeriesCapacitance, MonotoneInInduced) {
  Rng rng(11);
  std::uniform_real_distribution<double> d(0.01, 2000.0);
  for (int i = 0; i < 1000; ++i) {
    double a = d(rng), b = d(rng);
    if (a > b) std::swap(a, b);
    if (a == b) continue;
    EXPECT_LT(series_capacitance(a, 72.0), series_capacitance(b, 72.0));
  }
}

TEST(SeriesCapacitance, InverseRoundTrip) {
  Rng rng(12);
  std::uniform_real_distribution<double> d(0.01, 5000.0);
  for (int i = 0; i < 1000; ++i) {
    const double ci = d(rng);
    EXPECT_LT(rel_err(induced_from_series(series_capacitance(ci, 72.0), 72.0), ci), 1e-9);
  }
  EXPECT_THROW(induced_from_series(72.0, 72.0), DomainError);
}

TEST(PhaseSwitches, GateLevels) {
  EXPECT_EQ(phase_switches(Phase::kClear), (Switches{true, false, true, true}));
  EXPECT_EQ(phase_switches(Phase::kCharge), (Switches{false, true, false, false}));
  EXPECT_EQ(phase_switches(Phase::kTransfer), (Switches{false, false, true, false}));
  EXPECT_EQ(phase_switches(Phase::kSum), (Switches{false, false, true, true}));
}

TEST(PhaseTiming, DefaultSplitsTotal) {
  const PhaseTiming t;
  EXPECT_DOUBLE_EQ(t.total(), 350.0);
  EXPECT_DOUBLE_EQ(t.offset(Phase::kClear), 0.0);
  EXPECT_DOUBLE_EQ(t.offset(Phase::kSum), 262.5);
  PhaseTiming bad;
  bad.transfer_ns = 0.0;
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(MacUnit, PhaseOrderEnforced) {
  MacUnit u(62.937, 72.0);
  EXPECT_THROW(u.charge(0.5), UsageError);
  u.clear();
  EXPECT_THROW(u.transfer(), UsageError);
  u.charge(0.5);
  EXPECT_THROW(u.sum(0.1), UsageError);
  u.transfer();
  u.sum(0.1);
  EXPECT_THROW(u.transfer(), UsageError);
  u.clear();
  EXPECT_EQ(u.stored_charge_pc(), 0.0);
}

TEST(MacUnit, ChargeAndTransferValues) {
  Rng rng(13);
  std::uniform_real_distribution<double> cd(1.0, 70.0), vd(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double c = cd(rng), v = vd(rng);
    MacUnit u(c, 72.0);
    u.clear();
    u.charge(v);
    EXPECT_DOUBLE_EQ(u.stored_charge_pc(), c * v);
    u.transfer();
    EXPECT_DOUBLE_EQ(u.plate_voltage_v(), c * v / 72.0);
  }
}

TEST(MacEvaluate, UniformInsideHalfVolt) {
  const double c = series_capacitance(500.0, 72.0);
  const std::vector<double> cs(9, c), vs(9, 0.5);
  EXPECT_NEAR(mac_evaluate(cs, vs, 72.0), 9 * c * 0.5 / (9 * 72.0), 1e-15);
  EXPECT_NEAR(mac_evaluate(cs, vs, 72.0), 0.4371, 5e-5);
}

TEST(MacEvaluate, Errors) {
  const std::vector<double> c3(3, 10.0), v2(2, 0.1), v3{0.1, 1.5, 0.0};
  EXPECT_THROW(mac_evaluate(c3, v2, 72.0), ShapeError);
  EXPECT_THROW(mac_evaluate(c3, v3, 72.0), RangeError);
  EXPECT_THROW(mac_evaluate(std::vector<double>{}, std::vector<double>{}, 72.0), ShapeError);
}

TEST(MacEvaluate, TracedEqualsUntracedAndOracle) {
  Rng rng(14);
  std::uniform_real_distribution<double> cd(0.5, 70.0), vd(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> nd(1, 16);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = nd(rng);
    std::vector<double> c(n), v(n);
    for (std::size_t k = 0; k < n; ++k) {
      c[k] = cd(rng);
      v[k] = vd(rng);
    }
    Trace trace;
    TraceCapture cap{.out = &trace};
    const double traced = mac_evaluate(c, v, 72.0, &cap);
    const double plain = mac_evaluate(c, v, 72.0);
    EXPECT_EQ(traced, plain);
    EXPECT_LT(rel_err(plain, dot_oracle(c, v, 72.0)), 1e-12);
    ASSERT_EQ(trace.size(), 4 * n);
  }
}

TEST(MacEvaluate, TraceFollowsPhaseOrder) {
  const std::vector<double> c{10.0, 20.0, 30.0}, v{0.5, -0.25, 1.0};
  Trace trace;
  TraceCapture cap{.out = &trace, .bank = 2, .start_ns = 350.0};
  const double u = mac_evaluate(c, v, 72.0, &cap);
  ASSERT_EQ(trace.size(), 12u);
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& r = trace[p * 3 + i];
      EXPECT_EQ(r.phase, kPhaseOrder[p]);
      EXPECT_EQ(r.unit, i);
      EXPECT_EQ(r.bank, 2u);
      EXPECT_EQ(r.switches, phase_switches(kPhaseOrder[p]));
      EXPECT_DOUBLE_EQ(r.time_ns, 350.0 + 87.5 * static_cast<double>(p));
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(trace[3 + i].charge_pc, c[i] * v[i]);
    EXPECT_DOUBLE_EQ(trace[6 + i].voltage_v, c[i] * v[i] / 72.0);
    EXPECT_DOUBLE_EQ(trace[9 + i].voltage_v, u);
  }
}

TEST(MacEvaluate, LinearInVoltage) {
  Rng rng(15);
  std::uniform_real_distribution<double> cd(0.5, 70.0), vd(-0.5, 0.5), sd(-1.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    const std::size_t n = 1 + static_cast<std::size_t>(i % 16);
    std::vector<double> c(n), v1(n), v2(n), mix(n);
    const double a = sd(rng), b = sd(rng);
    for (std::size_t k = 0; k < n; ++k) {
      c[k] = cd(rng);
      v1[k] = vd(rng);
      v2[k] = vd(rng);
      mix[k] = a * v1[k] + b * v2[k];
    }
    const double lhs = mac_evaluate(c, mix, 72.0);
    const double rhs = a * mac_evaluate(c, v1, 72.0) + b * mac_evaluate(c, v2, 72.0);
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(Noise, ZeroFracIsIdentityAndDrawsNothing) {
  Rng a(5), b(5);
  EXPECT_EQ(apply_noise(123.0, 500.0, 0.0, a), 123.0);
  EXPECT_EQ(a(), b());
}

TEST(Noise, SampleStdMatchesConfigured) {
  Rng rng(16);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    // Far from the floor so the clamp never fires.
    const double x = apply_noise(5000.0, 500.0, 0.2, rng);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd, 100.0, 2.0);
}

TEST(Noise, ClampedAtFloor) {
  Rng rng(17);
  for (int i = 0; i < 10000; ++i) EXPECT_GE(apply_noise(16.77, 500.0, 0.5, rng, 0.01), 0.01);
}

TEST(Noise, ModeNames) {
  EXPECT_EQ(noise_mode_from_name(noise_mode_name(NoiseMode::kGlobal)), NoiseMode::kGlobal);
  EXPECT_EQ(noise_mode_from_name("per_class"), NoiseMode::kPerClass);
  EXPECT_THROW(noise_mode_from_name("pink"), UsageError);
}

TEST(SensorParams, Validation) {
  SensorParams p;
  EXPECT_NO_THROW(p.validate());
  p.c_il_pf = 600.0;
  EXPECT_THROW(p.validate(), DomainError);
  p = SensorParams{};
  p.noise_frac = -0.1;
  EXPECT_THROW(p.validate(), DomainError);
}

TEST(TraceCsv, HeaderAndGlobalIndex) {
  const std::vector<double> c{10.0, 20.0}, v{0.5, 0.5};
  Trace trace;
  TraceCapture cap{.out = &trace, .bank = 1};
  mac_evaluate(c, v, 72.0, &cap);
  std::ostringstream os;
  write_trace_csv(os, trace);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "unit_index,phase,CL,MUL,CON,ADD,charge_pC,voltage_V,time_ns");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 16), "2,clear,1,0,1,1,");
}
