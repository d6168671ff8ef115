#include <dlest/estimators.hpp>
#include <dlest/lepski.hpp>
#include <dlest/simulate.hpp>

#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using namespace dlest;

namespace {

const DriftModel& ou() {
  static const DriftModel m = DriftModel::ou(1.0);
  return m;
}
const InvariantModel& ou_inv() {
  static const InvariantModel inv = build_invariant(ou());
  return inv;
}

DiffusionPath make_path(std::vector<double> v, double dt) {
  DiffusionPath p;
  p.values = std::move(v);
  p.config.step = dt;
  p.config.horizon = dt * static_cast<double>(p.values.size() - 1);
  return p;
}

DiffusionPath ou_path(double t, std::uint64_t seed, double dt = 0.01) {
  SimConfig c;
  c.horizon = t;
  c.step = dt;
  return simulate_path(ou(), ou_inv(), c, seed);
}

const std::vector<OccupationRule> kRules = {OccupationRule::LeftPoint, OccupationRule::LinearInterpolation,
                                            OccupationRule::BrownianBridge};

}  // namespace

TEST(Derivative, HandComputedItoSum) {
  const auto K = Kernel::custom("half-triangle", [](double u) { return 1.0 - 2.0 * std::abs(u); }, 1);
  const auto p = make_path({0.0, 0.1, 0.3}, 0.1);
  const UniformGrid x{0.2, 1, 1};
  ASSERT_DOUBLE_EQ(x.at(0), 0.2);
  const auto est = derivative_estimator(p, K, 0.4, x);
  EXPECT_NEAR(est.values[0], 1.25, 1e-12);
  EXPECT_EQ(est.tag, EstimateTag::Derivative);
  EXPECT_EQ(est.bandwidth, 0.4);
}

TEST(Derivative, ZeroIncrementsGiveZero) {
  const auto p = make_path(std::vector<double>(50, 0.3), 0.01);
  const auto est = derivative_estimator(p, Kernel::triangular(), 0.2, UniformGrid::covering(-1, 1, 0.01));
  for (double v : est.values) EXPECT_EQ(v, 0.0);
}

TEST(Derivative, MatchesBruteForceSum) {
  const auto p = ou_path(50.0, 3);
  const auto g = UniformGrid::covering(-2.0, 2.0, 0.01);
  const auto est = derivative_estimator(p, Kernel::triangular(), 0.15, g);
  for (std::size_t j = 0; j < g.size; j += 37)
    EXPECT_NEAR(est.values[j], oracle::derivative_at(p.values, oracle::triangular, 0.15, 50.0, g.at(j)), 1e-12);
}

TEST(Derivative, ItoMeanMatchesBRhoAndMidpointDoesNot) {
  const double t = 5000.0, h = 0.2, x = 0.5;
  const auto K = Kernel::triangular();
  const UniformGrid g{0.5, 1, 1};
  std::vector<double> ito, mid;
  for (std::uint64_t r = 0; r < 200; ++r) {
    const auto p = ou_path(t, derive_seed(11, 0, r));
    ito.push_back(derivative_estimator(p, K, h, g).values[0]);
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < p.values.size(); ++i)
      s += oracle::triangular((x - 0.5 * (p.values[i] + p.values[i + 1])) / h) * (p.values[i + 1] - p.values[i]);
    mid.push_back(s / (t * h));
  }
  auto mean_se = [](const std::vector<double>& v) {
    double m = 0, q = 0;
    for (double a : v) m += a;
    m /= v.size();
    for (double a : v) q += (a - m) * (a - m);
    return std::pair{m, std::sqrt(q / (v.size() - 1) / v.size())};
  };
  const double target = -x * oracle::ou_density(x);
  // (b rho)' is bounded by 1/sqrt(pi), the Lipschitz constant for beta = 1.
  const double B = bias_bound(h, HolderSpec{1.0, 1.0 / std::sqrt(std::numbers::pi)}, K);
  const auto [m, se] = mean_se(ito);
  EXPECT_LE(std::abs(m - target), 3.0 * se + B);
  // Midpoint evaluation is the Stratonovich integral of a gradient, which
  // telescopes to a boundary term: its stationary mean is 0, not b rho.
  const auto [mm, mse] = mean_se(mid);
  EXPECT_GT(std::abs(mm - target), 3.0 * mse + B);
  EXPECT_NEAR(mm, 0.0, 3.0 * mse + 1e-3);
}

TEST(Density, ConstantPathGivesScaledKernel) {
  const auto p = make_path(std::vector<double>(11, 0.0), 0.01);
  const double h = 0.25;
  const auto g = UniformGrid::covering(-0.2, 0.2, 0.01);
  for (auto rule : {OccupationRule::LeftPoint, OccupationRule::LinearInterpolation}) {
    const auto est = density_kde(p, Kernel::triangular(), h, g, rule);
    for (std::size_t j = 0; j < g.size; ++j) EXPECT_DOUBLE_EQ(est.values[j], oracle::triangular(g.at(j) / h) / h);
  }
}

TEST(Density, MatchesBruteForceSum) {
  const auto p = ou_path(50.0, 4);
  const auto g = UniformGrid::covering(-2.0, 2.0, 0.01);
  const auto K = make_kernel(4);
  const auto est = density_kde(p, K, 0.3, g);
  for (std::size_t j = 0; j < g.size; j += 29)
    EXPECT_NEAR(est.values[j], oracle::kde_at(p.values, [&](double u) { return K(u); }, 0.3, g.at(j)), 1e-12);
}

TEST(Density, UnitMassForEveryRule) {
  const auto p = ou_path(100.0, 5);
  const auto g = UniformGrid::covering(-5.0, 5.0, 0.002);
  for (auto rule : kRules) {
    const auto est = density_kde(p, Kernel::triangular(), 0.05, g, rule);
    EXPECT_NEAR(quad::trapezoid(est.values, g.step), 1.0, 1e-3) << static_cast<int>(rule);
  }
}

TEST(Density, LinearInKernel) {
  const auto p = ou_path(20.0, 6);
  const auto g = UniformGrid::covering(-2.0, 2.0, 0.01);
  const auto K1 = Kernel::triangular();
  const auto K2 = make_kernel(2);
  const auto Ks = Kernel::custom("sum", [&](double u) { return K1(u) + K2(u); }, 1);
  const auto a = density_kde(p, K1, 0.2, g), b = density_kde(p, K2, 0.2, g), c = density_kde(p, Ks, 0.2, g);
  for (std::size_t j = 0; j < g.size; ++j) EXPECT_NEAR(c.values[j], a.values[j] + b.values[j], 1e-12);
}

TEST(Density, ShiftEquivariance) {
  const auto p = ou_path(20.0, 7);
  auto q = p;
  const double step = 0.01;
  const std::int64_t k = 37;
  for (double& v : q.values) v += static_cast<double>(k) * step;
  const auto g = UniformGrid::covering(-2.0, 2.0, step);
  const UniformGrid gs{step, g.first + k, g.size};
  for (auto rule : kRules) {
    const auto a = density_kde(p, Kernel::triangular(), 0.2, g, rule);
    const auto b = density_kde(q, Kernel::triangular(), 0.2, gs, rule);
    for (std::size_t j = 0; j < g.size; ++j) ASSERT_NEAR(a.values[j], b.values[j], 1e-9);
  }
  const auto da = derivative_estimator(p, Kernel::triangular(), 0.2, g);
  const auto db = derivative_estimator(q, Kernel::triangular(), 0.2, gs);
  for (std::size_t j = 0; j < g.size; ++j) ASSERT_NEAR(da.values[j], db.values[j], 1e-9);
}

TEST(Density, BandwidthRange) {
  const auto p = make_path({0.0, 0.1}, 0.01);
  const auto g = UniformGrid::covering(-1, 1, 0.1);
  for (double h : {0.0, -0.1, 1.0, 2.0}) {
    try {
      density_kde(p, Kernel::triangular(), h, g);
      FAIL() << h;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::BandwidthOutOfRange);
    }
    EXPECT_THROW(derivative_estimator(p, Kernel::triangular(), h, g), Error);
  }
}

TEST(Density, OuRiskSmallAndDecreasing) {
  const auto K = Kernel::triangular();
  auto risk = [&](double t, std::uint64_t tag) {
    const double h = 1.0 / std::sqrt(t);
    const auto g = default_window(ou().classA, h);
    const auto truth = tabulate(g, [](double x) { return oracle::ou_density(x); });
    double s = 0.0;
    for (std::uint64_t r = 0; r < 100; ++r)
      s += sup_distance(density_kde(ou_path(t, derive_seed(tag, 0, r)), K, h, g), truth);
    return s / 100.0;
  };
  const double r1 = risk(2500.0, 1), r2 = risk(5000.0, 2);
  EXPECT_LT(r2, 0.05);
  EXPECT_LT(r2, r1);
}

TEST(Bridge, TriangularClosedFormMatchesIndependentQuadrature) {
  const double dt = 0.01;
  for (auto [a, b] : {std::pair{0.0, 0.05}, std::pair{0.3, 0.1}, std::pair{-0.2, -0.2}, std::pair{0.0, 0.4}}) {
    const detail::BridgeOccupation B(a, b, dt);
    for (double x : {-0.1, 0.0, 0.07, 0.2, 0.35})
      for (double h : {0.05, 0.2}) {
        const double ref = oracle::gauss_legendre(
            [&](double y) { return oracle::triangular((x - y) / h) * oracle::bridge_occupation(a, b, dt, y); },
            x - 0.5 * h, x + 0.5 * h, 400);
        EXPECT_NEAR(detail::bridge_triangular(B, x, h), ref, 1e-9) << a << ' ' << b << ' ' << x << ' ' << h;
      }
  }
}

TEST(Bridge, OccupationDensityIntegratesToStep) {
  const double dt = 0.005;
  const detail::BridgeOccupation B(0.1, -0.05, dt);
  const double m = oracle::gauss_legendre([&](double y) { return B.density(y); }, -1.0, 1.0, 4000);
  EXPECT_NEAR(m, dt, 1e-12);
  for (double y : {-0.2, -0.05, 0.0, 0.12})
    EXPECT_NEAR(B.density(y), oracle::bridge_occupation(0.1, -0.05, dt, y), 1e-8) << y;
}

TEST(Bridge, GenericRuleMatchesClosedForm) {
  const auto tri = Kernel::custom("tri", oracle::triangular, 1);
  const detail::BridgeOccupation B(0.02, 0.31, 0.01);
  for (double x : {-0.05, 0.1, 0.2, 0.33})
    EXPECT_NEAR(detail::bridge_generic(B, tri, x, 0.1), detail::bridge_triangular(B, x, 0.1), 1e-10) << x;
  // The KDE branch for a non-triangular kernel goes through the generic rule.
  const auto p = ou_path(5.0, 9);
  const auto g = UniformGrid::covering(-2, 2, 0.01);
  const auto a = density_kde(p, Kernel::triangular(), 0.1, g, OccupationRule::BrownianBridge);
  const auto b = density_kde(p, tri, 0.1, g, OccupationRule::BrownianBridge);
  EXPECT_LT(sup_distance(a, b), 1e-9);
}

TEST(Ridge, AtEulerNumber) {
  EXPECT_NEAR(drift_ridge(std::numbers::e), std::exp(0.5), 1e-15);
  EXPECT_NEAR(drift_ridge(std::numbers::e), 1.6487212707001282, 1e-15);
  EXPECT_THROW(drift_ridge(1.0), Error);
}

TEST(Drift, ZeroNumeratorGivesZero) {
  const auto g = UniformGrid::covering(-1, 1, 0.1);
  FunctionEstimate num{g, std::vector<double>(g.size, 0.0), 0.1, 100.0, EstimateTag::Derivative};
  FunctionEstimate den{g, std::vector<double>(g.size, 0.4), 0.1, 100.0, EstimateTag::Density};
  const auto b = drift_estimator(num, den, 100.0);
  for (double v : b.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(b.tag, EstimateTag::Drift);
}

TEST(Drift, RidgeInDenominator) {
  const auto g = UniformGrid::covering(0, 0.1, 0.1);
  FunctionEstimate num{g, {1.0, 2.0}, 0.1, 100.0, EstimateTag::Derivative};
  FunctionEstimate den{g, {0.5, 0.25}, 0.1, 100.0, EstimateTag::Density};
  const double r = std::sqrt(std::log(100.0) / 100.0) * std::exp(std::sqrt(std::log(100.0)));
  const auto b = drift_estimator(num, den, 100.0);
  EXPECT_DOUBLE_EQ(b.values[0], 1.0 / (0.5 + r));
  EXPECT_DOUBLE_EQ(b.values[1], 2.0 / (0.25 + r));
}

TEST(Drift, GridMismatchAndNonpositiveDenominator) {
  const auto g = UniformGrid::covering(-1, 1, 0.1);
  const auto g2 = UniformGrid::covering(-1, 1, 0.05);
  FunctionEstimate num{g, std::vector<double>(g.size, 1.0), 0.1, 100.0, EstimateTag::Derivative};
  FunctionEstimate den{g2, std::vector<double>(g2.size, 0.4), 0.1, 100.0, EstimateTag::Density};
  try {
    drift_estimator(num, den, 100.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
  }
  FunctionEstimate neg{g, std::vector<double>(g.size, -10.0), 0.1, 100.0, EstimateTag::Density};
  try {
    drift_estimator(num, neg, 100.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DenominatorNonpositive);
  }
}

TEST(Drift, DenominatorSpecBandwidths) {
  EXPECT_DOUBLE_EQ(DriftDenominatorSpec{}.denominator_bandwidth(400.0), 0.05);
  DriftDenominatorSpec s{DriftDenominatorSpec::Kind::Simultaneous, 0.17};
  EXPECT_EQ(s.denominator_bandwidth(400.0), 0.17);
}

TEST(LocalTime, LinearPathHasUnitDensity) {
  std::vector<double> v(1001);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) * 1e-3;
  const auto p = make_path(v, 1e-3);
  const UniformGrid g{1e-3, 500, 2};  // x = 0.5 and 0.501
  const UniformGrid off{0.5005, 1, 1};
  EXPECT_NEAR(local_time_estimator(p, off, 0.05).values[0], 1.0, 1e-12);
  const auto far = local_time_estimator(p, UniformGrid{0.5, 4, 1}, 0.05);
  EXPECT_EQ(far.values[0], 0.0);
  EXPECT_EQ(local_time_estimator(p, g, 0.05).tag, EstimateTag::LocalTime);
  EXPECT_THROW(local_time_estimator(p, g, 0.0), Error);
}

TEST(LocalTime, AgreesWithKdeAsWindowsShrink) {
  const auto p = ou_path(2000.0, 12, 0.001);
  const auto g = UniformGrid::covering(-1.5, 1.5, 0.01);
  auto gap = [&](double eps) {
    return sup_distance(local_time_estimator(p, g, eps),
                        density_kde(p, Kernel::triangular(), 5.0 * eps, g, OccupationRule::LinearInterpolation));
  };
  const double wide = gap(0.16), narrow = gap(0.04);
  EXPECT_LT(narrow, wide);
  EXPECT_LT(narrow, 0.05);
  EXPECT_DOUBLE_EQ(default_local_time_eps(0.01), 0.2);
  EXPECT_DOUBLE_EQ(default_local_time_eps(1e-8), 1e-3);
}

TEST(SupDistance, Basics) {
  const auto g = UniformGrid::covering(-1, 1, 0.1);
  const auto a = tabulate(g, [](double x) { return std::sin(x); });
  const auto b = tabulate(g, [](double x) { return std::sin(x) + 0.25; });
  EXPECT_EQ(sup_distance(a, a), 0.0);
  EXPECT_NEAR(sup_distance(a, b), 0.25, 1e-15);
  double scan = 0.0;
  const auto c = tabulate(g, [](double x) { return x * x; });
  for (std::size_t j = 0; j < g.size; ++j) scan = std::max(scan, std::abs(a.values[j] - c.values[j]));
  EXPECT_EQ(sup_distance(a, c), scan);
  const auto d = tabulate(UniformGrid::covering(-1, 1, 0.05), [](double) { return 0.0; });
  EXPECT_THROW(sup_distance(a, d), Error);
}

TEST(WeightedDriftError, ExactAndShifted) {
  const auto g = default_window(1.0, 0.1);
  const auto exact = tabulate(g, [](double x) { return -x; });
  EXPECT_EQ(weighted_drift_error(exact, ou(), ou_inv()), 0.0);
  const auto shifted = tabulate(g, [](double x) { return 1.0 - x; });
  EXPECT_NEAR(weighted_drift_error(shifted, ou(), ou_inv()), 1.0 / std::numbers::pi, 1e-9);
}

TEST(Window, DefaultSpacing) {
  const auto w = default_window(1.0, 0.5);
  EXPECT_DOUBLE_EQ(w.step, 0.01);
  EXPECT_DOUBLE_EQ(w.front(), -3.0);
  EXPECT_DOUBLE_EQ(w.back(), 3.0);
  EXPECT_DOUBLE_EQ(default_window(1.0, 0.05).step, 0.005);
}

TEST(FunctionEstimate, CsvExport) {
  const auto g = UniformGrid::covering(0, 0.2, 0.1);
  const auto e = tabulate(g, [](double x) { return 2 * x; });
  std::ostringstream os;
  e.write_csv(os);
  EXPECT_EQ(os.str().rfind("x,value\n0,0\n", 0), 0u);
}
