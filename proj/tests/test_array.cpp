#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "capsense/array.hpp"
#include "capsense/error.hpp"

using namespace capsense;

namespace {

Matrix random_image(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> d(5.0, 800.0);
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = d(rng);
  return m;
}

Matrix random_weights(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = d(rng);
  return m;
}

// Direct nested-loop cross-correlation of the series image.
Matrix naive_conv(const Matrix& c_i, const std::vector<double>& k, std::size_t ks, double c0) {
  Matrix out(c_i.rows() - ks + 1, c_i.cols() - ks + 1);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      long double acc = 0.0L;
      for (std::size_t i = 0; i < ks; ++i) {
        for (std::size_t j = 0; j < ks; ++j) {
          const double cs = c_i(r + i, c + j) * c0 / (c_i(r + i, c + j) + c0);
          acc += static_cast<long double>(cs) * k[i * ks + j];
        }
      }
      out(r, c) = static_cast<double>(acc / (static_cast<long double>(ks * ks) * c0));
    }
  }
  return out;
}

}  // namespace

TEST(FcArray, FourBanksCoverEveryPixel) {
  const auto topo = build_fc_array(3, 3, 4);
  ASSERT_EQ(topo.banks(), 4u);
  EXPECT_EQ(topo.subpixels_per_pixel, 4u);
  for (const auto& bank : topo.bank_wiring) {
    ASSERT_EQ(bank.size(), 9u);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& p : bank) seen.insert({p.row, p.col});
    EXPECT_EQ(seen.size(), 9u);
  }
  EXPECT_THROW(build_fc_array(0, 3, 4), DomainError);
  EXPECT_THROW(build_fc_array(3, 3, 0), DomainError);
}

TEST(FcArray, ForwardEqualsPerOutputMac) {
  Rng rng(21);
  const SensorParams params;
  const auto topo = build_fc_array(3, 3, 4);
  for (int t = 0; t < 100; ++t) {
    const Matrix img = random_image(3, 3, rng);
    const Matrix w = random_weights(4, 9, rng);
    const auto u = fc_forward(topo, img, w, params);
    const Matrix cs = series_image(img, params.c0_pf);
    for (std::size_t m = 0; m < 4; ++m) {
      const double ref = mac_evaluate(cs.flat(), w.row(m), params.c0_pf);
      EXPECT_NEAR(u[m], ref, 1e-12 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST(FcArray, BankCountChangesCyclesNotValues) {
  Rng rng(22);
  const SensorParams params;
  const auto parallel = build_fc_array(3, 3, 4);
  const auto single = build_fc_array(3, 3, 1);
  for (int t = 0; t < 50; ++t) {
    const Matrix img = random_image(3, 3, rng);
    const Matrix w = random_weights(4, 9, rng);
    EXPECT_EQ(fc_forward(parallel, img, w, params), fc_forward(single, img, w, params));
  }
  EXPECT_EQ(fc_cycles(parallel, 4), 1u);
  EXPECT_EQ(fc_cycles(single, 4), 4u);
  EXPECT_EQ(fc_cycles(parallel, 9), 3u);
}

TEST(FcArray, TracedOutputsLandInTheirCycle) {
  Rng rng(23);
  const SensorParams params;
  const auto single = build_fc_array(3, 3, 1);
  const Matrix img = random_image(3, 3, rng);
  const Matrix w = random_weights(4, 9, rng);
  Trace trace;
  fc_forward(single, img, w, params, &trace);
  ASSERT_EQ(trace.size(), 4u * 4u * 9u);
  for (const auto& r : trace) {
    EXPECT_GE(r.time_ns, 350.0 * static_cast<double>(r.bank));
    EXPECT_LT(r.time_ns, 350.0 * static_cast<double>(r.bank + 1));
  }
}

TEST(FcArray, ShapeErrors) {
  const SensorParams params;
  const auto topo = build_fc_array(3, 3, 4);
  EXPECT_THROW(fc_forward(topo, Matrix(5, 5, 100.0), Matrix(4, 9), params), ShapeError);
  EXPECT_THROW(fc_forward(topo, Matrix(3, 3, 100.0), Matrix(4, 8), params), ShapeError);
}

TEST(ConvSchedule, FiveByFive) {
  const auto s = schedule_conv(5, 5, 3);
  ASSERT_EQ(s.steps.size(), 3u);
  for (const auto& step : s.steps) EXPECT_EQ(step.size(), 3u);
  EXPECT_EQ(s.window_count(), 9u);
  EXPECT_EQ(resource_report(5, 5, 3), (ResourceReport{9, 5, 3}));
  EXPECT_EQ(resource_report(3, 3, 3), (ResourceReport{9, 3, 1}));
  EXPECT_EQ(resource_report(8, 10, 3), (ResourceReport{9, 8, 8}));
  EXPECT_THROW(schedule_conv(2, 5, 3), DomainError);
}

TEST(ConvSchedule, ExhaustiveAndAdcDisjoint) {
  for (std::size_t m = 3; m <= 12; ++m) {
    for (std::size_t n = 3; n <= 12; ++n) {
      const auto s = schedule_conv(m, n, 3);
      std::set<std::pair<std::size_t, std::size_t>> origins;
      for (std::size_t k = 0; k < s.steps.size(); ++k) {
        std::set<std::size_t> adcs;
        for (const auto& w : s.steps[k]) {
          EXPECT_TRUE(adcs.insert(w.adc).second);
          EXPECT_EQ(w.adc, w.origin_row);
          EXPECT_EQ(w.origin_col, k);  // left to right
          EXPECT_TRUE(origins.insert({w.origin_row, w.origin_col}).second);
        }
      }
      EXPECT_EQ(origins.size(), (m - 2) * (n - 2));
    }
  }
}

TEST(ConvArray, ForwardMatchesNaiveCorrelation) {
  Rng rng(24);
  const SensorParams params;
  for (std::size_t rows : {3u, 5u, 7u}) {
    for (std::size_t cols : {3u, 5u, 6u}) {
      const auto topo = build_conv_array(rows, cols, 3);
      const auto sched = schedule_conv(rows, cols, 3);
      for (int t = 0; t < 20; ++t) {
        const Matrix img = random_image(rows, cols, rng);
        const Matrix k = random_weights(1, 9, rng);
        const std::vector<double> kv(k.flat().begin(), k.flat().end());
        const Matrix got = conv_forward(topo, sched, img, kv, params);
        const Matrix ref = naive_conv(img, kv, 3, params.c0_pf);
        ASSERT_EQ(got.rows(), rows - 2);
        ASSERT_EQ(got.cols(), cols - 2);
        for (std::size_t i = 0; i < got.size(); ++i) {
          EXPECT_NEAR(got.flat()[i], ref.flat()[i], 1e-12 * std::max(1.0, std::abs(ref.flat()[i])));
        }
      }
    }
  }
}

TEST(ConvArray, SubpixelsNeverSharedBetweenWindows) {
  const auto topo = build_conv_array(5, 5, 3);
  EXPECT_EQ(topo.subpixels_per_pixel, 9u);
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> used;
  for (std::size_t b = 0; b < topo.banks(); ++b) {
    for (std::size_t i = 0; i < topo.bank_wiring[b].size(); ++i) {
      const auto& p = topo.bank_wiring[b][i];
      EXPECT_TRUE(used.insert({p.row, p.col, topo.subpixel_of(b, i)}).second);
    }
  }
}

TEST(ConvArray, KernelSizeMismatch) {
  const SensorParams params;
  const auto topo = build_conv_array(5, 5, 3);
  const auto sched = schedule_conv(5, 5, 3);
  const std::vector<double> k(8, 0.1);
  EXPECT_THROW(conv_forward(topo, sched, Matrix(5, 5, 100.0), k, params), ShapeError);
}

TEST(ScheduleJson, Structure) {
  const auto j = nlohmann::json::parse(schedule_to_json(schedule_conv(5, 5, 3)));
  ASSERT_TRUE(j.contains("steps"));
  EXPECT_EQ(j["steps"].size(), 3u);
}
