#include <dlest/asymptotics.hpp>
#include <dlest/model.hpp>

#include <gtest/gtest.h>

#include <cstring>

#include "oracles.hpp"

using namespace dlest;

namespace {

const InvariantModel& ou_inv() {
  static const InvariantModel inv = build_invariant(DriftModel::ou(1.0));
  return inv;
}

DriftModel tanh_model() {
  DriftModel m;
  m.family = TanhShift{1.5, 2.0, 0.3};
  m.classC = 4.0;
  m.classA = 1.5;
  m.classGamma = 0.5;
  return m;
}

DriftModel poly(std::vector<double> c, double C = 1.0) {
  DriftModel m;
  m.family = Polynomial{std::move(c)};
  m.classC = C;
  return m;
}

}  // namespace

TEST(BuildInvariant, OuDensityAtZero) { EXPECT_NEAR(ou_inv().density(0.0), 1.0 / std::sqrt(std::numbers::pi), 1e-9); }

TEST(BuildInvariant, OuDerivativeAtOne) {
  EXPECT_NEAR(ou_inv().density_derivative(1.0), -2.0 * std::exp(-1.0) / std::sqrt(std::numbers::pi), 1e-6);
}

TEST(BuildInvariant, OuMatchesClosedFormOnWindow) {
  const auto& inv = ou_inv();
  double worst = 0.0;
  for (double x = -4.0; x <= 4.0; x += 0.0137) worst = std::max(worst, std::abs(inv.density(x) - oracle::ou_density(x)));
  EXPECT_LE(worst, 1e-8);
}

TEST(BuildInvariant, UnitMassForSeveralModels) {
  for (const auto& m : {DriftModel::ou(1.0), DriftModel::ou(3.0), tanh_model()}) {
    const auto inv = build_invariant(m);
    EXPECT_NEAR(quad::trapezoid(inv.rho, inv.grid.step), 1.0, 1e-6) << m.family_name();
  }
}

TEST(BuildInvariant, CdfIsMonotoneWithCorrectEnds) {
  const auto inv = build_invariant(tanh_model());
  for (std::size_t i = 1; i < inv.cdf.size(); ++i) ASSERT_GE(inv.cdf[i], inv.cdf[i - 1]);
  EXPECT_NEAR(inv.cdf.front(), 0.0, 1e-10);
  EXPECT_NEAR(inv.cdf.back(), 1.0, 1e-8);
  for (double v : inv.rho) ASSERT_GE(v, 0.0);
}

TEST(BuildInvariant, DerivativeIdentityTwoBRho) {
  const auto m = tanh_model();
  const auto inv = build_invariant(m);
  const auto d = quad::derivative(inv.rho, inv.grid.step);
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < inv.grid.size; ++i)
    worst = std::max(worst, std::abs(d[i] - 2.0 * m(inv.grid.at(i)) * inv.rho[i]));
  EXPECT_LT(worst, 1e-5);
}

TEST(BuildInvariant, EvenDriftHasMedianZero) {
  for (const auto& m : {DriftModel::ou(0.7), poly({0.0, -1.0, 0.0, -0.2}, 4.0)}) {
    const auto inv = build_invariant(m);
    EXPECT_NEAR(inv.cdf_at(0.0), 0.5, 1e-8);
  }
}

TEST(BuildInvariant, Deterministic) {
  const auto a = build_invariant(tanh_model());
  const auto b = build_invariant(tanh_model());
  ASSERT_EQ(a.rho.size(), b.rho.size());
  EXPECT_EQ(std::memcmp(a.rho.data(), b.rho.data(), a.rho.size() * sizeof(double)), 0);
  EXPECT_EQ(std::memcmp(a.cdf.data(), b.cdf.data(), a.cdf.size() * sizeof(double)), 0);
}

TEST(BuildInvariant, SpeedTotalIsNormalizingConstant) {
  const auto& inv = ou_inv();
  EXPECT_NEAR(inv.normConst, std::sqrt(std::numbers::pi), 1e-9);
  EXPECT_EQ(inv.speedTotal, inv.normConst);
}

TEST(BuildInvariant, ExplodingDriftIsNonErgodic) {
  DriftModel m = DriftModel::ou(-1.0);
  try {
    build_invariant(m);
    FAIL() << "expected NonErgodicDrift";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonErgodicDrift);
  }
}

TEST(BuildInvariant, CoarseGridIsRejected) {
  try {
    build_invariant(DriftModel::ou(40.0, 60.0, 0.05, 2.0), GridSpec{0.0, 0.3, 1e-6});
    FAIL() << "expected GridTooCoarse";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridTooCoarse);
  }
}

TEST(DriftFromDensity, RecoversOuDrift) {
  const auto& inv = ou_inv();
  const auto b = drift_from_density(inv, std::pair{-3.0, 3.0});
  EXPECT_NEAR(linear_interp(b.grid, b.values, 1.0), -1.0, 1e-6);
  EXPECT_NEAR(linear_interp(b.grid, b.values, 0.0), 0.0, 1e-12);
}

TEST(DriftFromDensity, RoundtripOnClassWindow) {
  const auto m = tanh_model();
  const auto inv = build_invariant(m);
  const auto b = drift_from_density(inv, std::pair{-m.classA, m.classA});
  double worst = 0.0;
  for (std::size_t k = 0; k < b.grid.size; ++k) worst = std::max(worst, std::abs(b.values[k] - m(b.grid.at(k))));
  EXPECT_LT(worst, 1e-5);
}

TEST(DriftFromDensity, ZeroDensityInWindowRaises) {
  const auto g = UniformGrid::covering(-2.0, 2.0, 0.01);
  std::vector<double> rho(g.size);
  for (std::size_t i = 0; i < g.size; ++i) rho[i] = std::max(0.0, 0.75 * (1.0 - g.at(i) * g.at(i)));
  const auto inv = InvariantModel::from_density(g, rho);
  try {
    drift_from_density(inv, std::pair{-1.5, 1.5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroDensity);
  }
}

TEST(DriftFromDensity, BumpMemberMatchesDirectFormula) {
  const auto set = build_hypotheses(DriftModel::ou(1.0), HolderSpec{1.0, 5.0}, ClassParams{}, 0.5, 2000.0);
  const auto& mem = set.members.back();
  ASSERT_NE(mem.j, 0);
  const auto rec = drift_from_density(*mem.inv, std::pair{mem.center - 0.5, mem.center + 0.5});
  BumpSpec bump{mem.center, set.ht, 5.0 * std::pow(set.ht, 2.0), set.qScale};
  double worst = 0.0, worst_table = 0.0;
  for (std::size_t k = 0; k < rec.grid.size; ++k) {
    const double x = rec.grid.at(k);
    const double direct =
        (-2.0 * x * oracle::ou_density(x) + bump.derivative(x)) / (2.0 * (oracle::ou_density(x) + bump.value(x)));
    worst = std::max(worst, std::abs(rec.values[k] - direct));
    worst_table = std::max(worst_table, std::abs(linear_interp(mem.drift.grid, mem.drift.values, x) - direct));
  }
  // Central differences of log rho carry the O(step^2) third-derivative error of the bump.
  EXPECT_LT(worst, 1e-3);
  EXPECT_LT(worst_table, 1e-6);
}

TEST(SigmaMembership, OuPasses) { EXPECT_TRUE(check_sigma_membership(DriftModel::ou(1.0)).passed); }

TEST(SigmaMembership, WrongSignFailsOutsideA) {
  const auto rep = check_sigma_membership(poly({0.0, 1.0}));
  EXPECT_FALSE(rep.passed);
  bool any_revert = false;
  for (const auto& v : rep.violations) {
    if (v.kind == SigmaViolation::Kind::MeanReversion) {
      any_revert = true;
      EXPECT_GT(std::abs(v.x), 1.0);
    }
  }
  EXPECT_TRUE(any_revert);
}

TEST(SigmaMembership, CubicBreaksLinearGrowth) {
  const auto rep = check_sigma_membership(poly({0.0, 0.0, 0.0, -1.0}, 2.0));
  EXPECT_FALSE(rep.passed);
  bool growth = false;
  for (const auto& v : rep.violations) growth = growth || v.kind == SigmaViolation::Kind::LinearGrowth;
  EXPECT_TRUE(growth);
}

TEST(SigmaMembership, EveryPassingModelBuilds) {
  for (const auto& m : {DriftModel::ou(0.6), DriftModel::ou(2.0, 4.0), tanh_model(), poly({0.1, -1.0}, 2.0)}) {
    ASSERT_TRUE(check_sigma_membership(m).passed) << m.family_name();
    const auto inv = build_invariant(m);
    EXPECT_NEAR(quad::trapezoid(inv.rho, inv.grid.step), 1.0, 1e-6);
  }
}

TEST(Holder, SineInThreeHalves) {
  const auto g = UniformGrid::covering(-5.0, 5.0, 1e-3);
  Tabulated f{g, std::vector<double>(g.size)};
  for (std::size_t i = 0; i < g.size; ++i) f.values[i] = std::sin(g.at(i));
  const auto rep = check_holder(f, HolderSpec{1.5, 2.0});
  EXPECT_EQ(rep.floorBeta, 1);
  EXPECT_TRUE(rep.passed);
  EXPECT_NEAR(rep.derivativeSups[0], 1.0, 1e-6);
  // Independent scan of the 1/2-seminorm of cos on the same lags.
  double scan = 0.0;
  for (std::size_t lag = 1; lag < 2000; lag += 7)
    for (std::size_t i = 0; i + lag < g.size; i += 13)
      scan = std::max(scan, std::abs(std::cos(g.at(i + lag)) - std::cos(g.at(i))) / std::sqrt(lag * g.step));
  EXPECT_LE(scan, 2.0);
  EXPECT_GE(rep.seminorm, 0.9 * scan);
}

TEST(Holder, ZeroFunctionPasses) {
  const auto g = UniformGrid::covering(-1.0, 1.0, 1e-2);
  EXPECT_TRUE(check_holder(Tabulated{g, std::vector<double>(g.size, 0.0)}, HolderSpec{2.5, 1e-3}).passed);
}

TEST(Holder, AbsoluteValueFailsThreeHalves) {
  const auto g = UniformGrid::covering(-1.0, 1.0, 1e-3);
  Tabulated f{g, std::vector<double>(g.size)};
  for (std::size_t i = 0; i < g.size; ++i) f.values[i] = std::abs(g.at(i));
  EXPECT_FALSE(check_holder(f, HolderSpec{1.5, 2.0}).passed);
}

TEST(Holder, TooFewNodes) {
  const auto g = UniformGrid::covering(0.0, 1.0, 0.2);
  EXPECT_THROW(check_holder(Tabulated{g, std::vector<double>(g.size, 0.0)}, HolderSpec{1.0, 1.0}), Error);
}

TEST(Holder, StrictFloorAtIntegers) {
  EXPECT_EQ((HolderSpec{1.0, 1.0}).floor_beta(), 0);
  EXPECT_EQ((HolderSpec{2.0, 1.0}).floor_beta(), 1);
  EXPECT_THROW((HolderSpec{0.0, 1.0}).validate(), Error);
  EXPECT_THROW((HolderSpec{1.0, -1.0}).validate(), Error);
}

TEST(Donsker, OuPasses) {
  const auto d = donsker_condition_diagnostics(ou_inv());
  EXPECT_TRUE(d.passed);
  ASSERT_FALSE(d.condBtail.empty());
  EXPECT_LT(d.condBtail.back(), 1e-6);
  EXPECT_GT(d.condA, 0.0);
  EXPECT_NEAR(d.leftHalf, d.rightHalf, 1e-9 * d.condA);
}

TEST(Donsker, CondAMatchesGaussLegendre) {
  const double c = std::sqrt(std::numbers::pi);
  const double ref = oracle::gauss_legendre(
      [&](double x) {
        const double F = oracle::ou_cdf(x), S = 1.0 - F;
        return F * F * S * S / (oracle::ou_density(x) * c);
      },
      -10.0, 10.0, 4000);
  EXPECT_NEAR(donsker_condition_diagnostics(ou_inv()).condA, ref, 1e-7);
}

TEST(Donsker, HeavyTailsAreNotResolved) {
  const auto g = UniformGrid::covering(-20.0, 20.0, 0.01);
  std::vector<double> rho(g.size);
  for (std::size_t i = 0; i < g.size; ++i) rho[i] = 1.0 / (std::numbers::pi * (1.0 + g.at(i) * g.at(i)));
  const auto inv = InvariantModel::from_density(g, rho);
  try {
    donsker_condition_diagnostics(inv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TailNotResolved);
  }
}

TEST(InvariantModel, CsvHasHeaderAndRows) {
  std::ostringstream os;
  ou_inv().write_csv(os);
  const auto s = os.str();
  EXPECT_EQ(s.rfind("x,rho,cdf,scale\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), ou_inv().grid.size + 1);
}

TEST(InvariantModel, ScaleDerivativeIsInverseSpeed) {
  const auto& inv = ou_inv();
  const std::size_t i = inv.center_index() + 700;
  const double ds = (inv.scale[i + 1] - inv.scale[i - 1]) / (2.0 * inv.grid.step);
  EXPECT_NEAR(ds * inv.rho[i] * inv.speedTotal, 1.0, 1e-5);
}
