#pragma once

//! Efficiency objects (limit covariance, Cramer-Rao bounds, generator and
//! Poisson solution), concentration bound functions, the lower-bound
//! hypothesis family, and a Kolmogorov-Smirnov normality check.

#include <dlest/kernels.hpp>
#include <dlest/lepski.hpp>
#include <dlest/model.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

namespace dlest {

/// Cumulative tables for H(x, y).
///
/// With a = min(x, y), b = max(x, y) the integrand of
/// int (1{z>=x} - F)(1{z>=y} - F) w(z) dz is F^2 w left of a,
/// -F(1-F) w between a and b, and (1-F)^2 w right of b. Each piece is a
/// fourth-order cumulative integral evaluated by Hermite interpolation.
/// The speed-scale route uses w = m(R) s'(z); the influence route writes
/// h(z,x) h(z,y) rho(z) directly, which gives w = 1/rho(z).
class CovarianceOperator {
 public:
  enum class Route { ScaleSpeed, Influence };

  CovarianceOperator(const InvariantModel& inv, Route route) : inv_(&inv) {
    const auto& g = inv.grid;
    const std::size_t n = g.size;
    lo_.resize(n);
    mid_.resize(n);
    hi_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double F = inv.cdf[i], S = inv.survival[i], r = inv.rho[i];
      double w;
      if (route == Route::ScaleSpeed) {
        const double e = std::exp(-inv.logIntegrand[i]);
        w = std::isfinite(e) ? inv.speedTotal * e : std::numeric_limits<double>::infinity();
      } else {
        w = r > 0.0 ? 1.0 / r : std::numeric_limits<double>::infinity();
      }
      lo_[i] = F > 0.0 ? F * F * w : 0.0;
      mid_[i] = F > 0.0 && S > 0.0 ? F * S * w : 0.0;
      hi_[i] = S > 0.0 ? S * S * w : 0.0;
    }
    // Only the left tail of F^2 w and the right tail of (1-F)^2 w are ever
    // integrated to the grid end.
    const std::size_t c = inv.center_index();
    const double peak_lo = max_abs(std::span<const double>(lo_).first(c + 1));
    const double peak_hi = max_abs(std::span<const double>(hi_).subspan(c));
    const auto [pl, pr] = detail::tail_probes(n);
    if (!std::isfinite(peak_lo) || !std::isfinite(peak_hi) || lo_[pl] > 1e-8 * peak_lo || hi_[pr] > 1e-8 * peak_hi)
      fail(ErrorKind::TailNotResolved, "covariance integrand not negligible at the grid ends");
    cum_lo_ = quad::cumulative_em(lo_, g.step);
    cum_mid_ = quad::cumulative_em(mid_, g.step);
    cum_hi_ = quad::cumulative_em_right(hi_, g.step);
    neg_hi_.resize(n);
    for (std::size_t i = 0; i < n; ++i) neg_hi_[i] = -hi_[i];
  }

  double operator()(double x, double y) const {
    const auto& g = inv_->grid;
    const double a = std::min(x, y), b = std::max(x, y);
    const double left = hermite(g, cum_lo_, lo_, a);
    const double middle = hermite(g, cum_mid_, mid_, b) - hermite(g, cum_mid_, mid_, a);
    const double right = hermite(g, cum_hi_, neg_hi_, b);
    return 4.0 * inv_->density(x) * inv_->density(y) * (left - middle + right);
  }

  /// Node-index form, exact table lookups (used by double integrals).
  double at_nodes(std::size_t i, std::size_t j) const {
    const std::size_t a = std::min(i, j), b = std::max(i, j);
    return 4.0 * inv_->rho[i] * inv_->rho[j] * (cum_lo_[a] - (cum_mid_[b] - cum_mid_[a]) + cum_hi_[b]);
  }

 private:
  const InvariantModel* inv_;
  std::vector<double> lo_, mid_, hi_, neg_hi_, cum_lo_, cum_mid_, cum_hi_;
};

/// H(x, y) = 4 m(R) rho(x) rho(y) int (1{z>=x} - F)(1{z>=y} - F) ds(z).
inline double limit_covariance(const InvariantModel& inv, double x, double y) {
  return CovarianceOperator(inv, CovarianceOperator::Route::ScaleSpeed)(x, y);
}

/// CR(x, y) = 4 rho(x) rho(y) int h(z,x) h(z,y) rho(z) dz.
inline double cramer_rao_covariance(const InvariantModel& inv, double x, double y) {
  return CovarianceOperator(inv, CovarianceOperator::Route::Influence)(x, y);
}

/// Influence kernel h(z, x) = (1{z >= x} - F(z)) / rho(z).
inline double influence(const InvariantModel& inv, double z, double x) {
  const double r = inv.density(z);
  if (!(r > 0.0)) fail(ErrorKind::ZeroDensity, "influence kernel at zero density");
  return (z >= x ? 1.0 - inv.cdf_at(z) : -inv.cdf_at(z)) / r;
}

/// CR(y) = || 2 rho(y) h(., y) ||^2 in L2(mu_b).
inline double cramer_rao_point(const InvariantModel& inv, double y) {
  return CovarianceOperator(inv, CovarianceOperator::Route::Influence)(y, y);
}

/// L_b f = b f' + f''/2 by central differences (one-sided at the ends).
template <class Drift>
Tabulated generator_apply(const Tabulated& f, const Drift& b) {
  const auto& g = f.grid;
  const std::size_t n = g.size;
  if (n < 5) fail(ErrorKind::GridTooCoarse, "generator needs at least five nodes");
  const double h = g.step;
  const auto d1 = quad::derivative(f.values, h);
  std::vector<double> d2(n);
  for (std::size_t i = 1; i + 1 < n; ++i) d2[i] = (f.values[i + 1] - 2.0 * f.values[i] + f.values[i - 1]) / (h * h);
  d2[0] = (2.0 * f.values[0] - 5.0 * f.values[1] + 4.0 * f.values[2] - f.values[3]) / (h * h);
  d2[n - 1] = (2.0 * f.values[n - 1] - 5.0 * f.values[n - 2] + 4.0 * f.values[n - 3] - f.values[n - 4]) / (h * h);
  Tabulated out{g, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) out.values[i] = b(g.at(i)) * d1[i] + 0.5 * d2[i];
  return out;
}

struct PoissonSolution {
  Tabulated T;       ///< T(z), T(0) = 0
  Tabulated dT;      ///< T'(z)
  double mean = 0.0; ///< mu_b(g)
};

/// T(z) = int_0^z int 2 g(x) rho(x) h(u, x) dx du.
///
/// The inner integral equals [G(u) S(u) - F(u)(G_inf - G(u))] / rho(u) with
/// G(u) = int_{-inf}^u 2 g rho, written so both tails avoid cancellation.
inline PoissonSolution poisson_solve(const Tabulated& g, const InvariantModel& inv) {
  require_same_grid(g.grid, inv.grid, "Poisson source must live on the invariant grid");
  const std::size_t n = inv.grid.size;
  std::vector<double> src(n);
  for (std::size_t i = 0; i < n; ++i) src[i] = 2.0 * g.values[i] * inv.rho[i];
  if (std::abs(g.values.front()) > 0.0 || std::abs(g.values.back()) > 0.0)
    fail(ErrorKind::TailNotResolved, "source is not compactly supported inside the grid");
  const auto G = quad::cumulative_em(src, inv.grid.step);
  const auto Gr = quad::cumulative_em_right(src, inv.grid.step);  // G_inf - G
  PoissonSolution sol;
  sol.mean = 0.5 * G.back();
  sol.dT = Tabulated{inv.grid, std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const double num = G[i] * inv.survival[i] - inv.cdf[i] * Gr[i];
    sol.dT.values[i] = inv.rho[i] > 0.0 ? num / inv.rho[i] : 0.0;
  }
  sol.T = Tabulated{inv.grid, detail::integral_from_zero(inv.grid, sol.dT.values)};
  return sol;
}

/// || T' ||^2 in L2(mu_b).
inline double dirichlet_energy(const PoissonSolution& sol, const InvariantModel& inv) {
  std::vector<double> f(inv.grid.size);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = sol.dT.values[i] * sol.dT.values[i] * inv.rho[i];
  return quad::trapezoid_em(f, inv.grid.step);
}

/// Double integral of g(x) H(x, y) g(y) over the support of g, with the inner
/// integral split at the diagonal where H has a kink.
inline double quadratic_form(const Tabulated& g, const InvariantModel& inv) {
  require_same_grid(g.grid, inv.grid, "quadratic form source must live on the invariant grid");
  std::size_t a = g.grid.size, b = 0;
  for (std::size_t i = 0; i < g.grid.size; ++i)
    if (g.values[i] != 0.0) {
      a = std::min(a, i);
      b = std::max(b, i);
    }
  if (a > b) return 0.0;
  a = a > 0 ? a - 1 : a;
  b = std::min(b + 1, g.grid.size - 1);
  const CovarianceOperator H(inv, CovarianceOperator::Route::Influence);
  const double h = g.grid.step;
  std::vector<double> outer(b - a + 1), row;
  for (std::size_t i = a; i <= b; ++i) {
    row.clear();
    for (std::size_t j = a; j <= i; ++j) row.push_back(g.values[j] * H.at_nodes(i, j));
    double inner = quad::trapezoid_em(row, h);
    row.clear();
    for (std::size_t j = i; j <= b; ++j) row.push_back(g.values[j] * H.at_nodes(i, j));
    inner += quad::trapezoid_em(row, h);
    outer[i - a] = g.values[i] * inner;
  }
  return quad::trapezoid_em(outer, h);
}

/// Unspecified constants of the concentration bounds; all default to 1.
struct BoundConstants {
  double cHat = 1.0, cHat0 = 1.0;
  double nu1 = 1.0, nu2 = 1.0, nu3 = 1.0;
  double etaBar1 = 1.0, etaBar2 = 1.0;

  void validate() const {
    for (double v : {cHat, cHat0, nu1, nu2, nu3, etaBar1, etaBar2})
      if (!(v > 0.0)) fail(ErrorKind::ConfigError, "bound constants must be positive");
  }
};

inline void check_bound_args(double t, double h, double u) {
  if (!(u >= 1.0) || !(h > 0.0 && h < 1.0) || !(t >= 1.0))
    fail(ErrorKind::DomainError, "bound functions need u >= 1, 0 < h < 1, t >= 1");
}

/// Concentration bound for the derivative estimator around its mean.
inline double phi_bound(double t, double h, double u, const BoundConstants& c) {
  check_bound_args(t, h, u);
  const double L = std::log(u * t / h);
  const double sth = std::sqrt(t * h);
  const double v = (std::pow(L, 1.5) + std::sqrt(L) + std::pow(u, 1.5)) / std::sqrt(t) + u / (t * h) +
                   std::exp(-c.cHat0 * t) / h + std::sqrt(L) / sth + L / (std::pow(t, 0.75) * std::sqrt(h)) +
                   (std::sqrt(u) + u / std::pow(t, 0.25)) / sth;
  return c.cHat * v;
}

struct PsiBreakdown {
  double stochastic = 0.0;
  double mixing = 0.0;
  double bias = 0.0;
  double total() const { return stochastic + mixing + bias; }
};

/// Sup-norm concentration bound for the density estimator, split by term.
inline PsiBreakdown psi_bound(double t, double h, double u, const HolderSpec& spec, const Kernel& K,
                              const BoundConstants& c) {
  check_bound_args(t, h, u);
  spec.validate();
  PsiBreakdown p;
  p.stochastic = c.nu1 / std::sqrt(t) *
                     (1.0 + std::sqrt(std::log(1.0 / std::sqrt(h))) + std::sqrt(std::log(u * t)) + std::sqrt(u)) +
                 c.nu2 * u / t;
  p.mixing = std::exp(-c.nu3 * t) / h;
  p.bias = spec.L * std::pow(h, spec.beta + 1.0) / factorial(strict_floor(spec.beta + 1.0)) *
           K.abs_moment(spec.beta + 1.0);
  return p;
}

struct PsiBar {
  double value = 0.0;
  bool inRegime = false;  ///< (log t)^2/t < h < (log t)^{-3} and u <= alpha log t
};

/// sqrt(rhoSup) (2 etaBar1 sqrt(log(ut/h)/(th)) + etaBar2 sqrt(u/(th))).
inline PsiBar psi_bar_bound(double t, double h, double u, double rhoSup, const BoundConstants& c,
                            double alpha = 1.0) {
  check_bound_args(t, h, u);
  if (!(rhoSup >= 0.0)) fail(ErrorKind::DomainError, "rhoSup must be nonnegative");
  PsiBar r;
  const double th = t * h;
  r.value = std::sqrt(rhoSup) * (2.0 * c.etaBar1 * std::sqrt(std::log(u * t / h) / th) + c.etaBar2 * std::sqrt(u / th));
  const double lt = std::log(t);
  r.inRegime = h > lt * lt / t && h < std::pow(lt, -3.0) && u <= alpha * lt;
  return r;
}

/// Scale c making c * odd_bump lie in H(beta + 1, 1/2) by grid estimate.
inline double bump_scale(double beta) {
  const double step = 1e-4;
  const auto g = UniformGrid::covering(-0.5, 0.5, step);
  Tabulated q{g, std::vector<double>(g.size)};
  for (std::size_t i = 0; i < g.size; ++i) q.values[i] = odd_bump(g.at(i));
  const auto rep = check_holder(q, HolderSpec{beta + 1.0, 1.0}, 1.0);
  double worst = rep.seminorm;
  for (double s : rep.derivativeSups) worst = std::max(worst, s);
  return 0.5 / worst;
}

struct ClassParams {
  double C = 4.0;
  double A = 1.0;
  double gamma = 0.5;
};

struct HypothesisMember {
  int j = 0;
  double center = 0.0;
  std::shared_ptr<const InvariantModel> inv;  ///< rho_j table (with exact rho_j')
  Tabulated drift;                            ///< b_j on the member grid
  DriftModel model;                           ///< evaluable b_j for simulation
};

struct HypothesisValidation {
  bool positivity = false;
  bool mass = false;
  bool holder = false;
  bool sigma = false;
  bool disjoint = false;
  bool separation = false;
  double cStar = 0.0;
  double minSeparation = 0.0;
  double requiredSeparation = 0.0;
  double worstMassError = 0.0;
  double worstHolder = 0.0;
  bool passed() const { return positivity && mass && holder && sigma && disjoint && separation; }
};

struct HypothesisSet {
  std::shared_ptr<const DriftModel> baseModel;
  std::shared_ptr<const InvariantModel> base;
  HolderSpec spec;
  ClassParams params;
  double v = 0.5;
  double t = 0.0;
  double ht = 0.0;
  double qScale = 0.0;
  std::vector<HypothesisMember> members;
  HypothesisValidation validation;
};

/// Perturbations G_j = L h_t^{beta+1} Q((x - x_j)/h_t) of rho_0 with
/// h_t = v (log t / t)^{1/(2 beta + 1)} and centers x_j = 2 h_t j.
///
/// The member grid uses spacing h_t / m (m the smallest integer with spacing
/// <= 1e-3), so every center is a node and the derivative separation at x_j
/// is measured exactly.
inline HypothesisSet build_hypotheses(const DriftModel& b0, const HolderSpec& spec, const ClassParams& cls, double v,
                                      double t) {
  spec.validate();
  if (!(v > 0.0 && v < 1.0)) fail(ErrorKind::DomainError, "v must lie in (0, 1)");
  if (!(t > 1.0)) fail(ErrorKind::DomainError, "t must exceed 1");
  HypothesisSet set;
  set.spec = spec;
  set.params = cls;
  set.v = v;
  set.t = t;
  set.ht = v * std::pow(std::log(t) / t, 1.0 / (2.0 * spec.beta + 1.0));
  set.qScale = bump_scale(spec.beta);

  DriftModel base = b0;
  base.classC = cls.C / 2.0;
  base.classA = cls.A;
  base.classGamma = cls.gamma;
  if (!check_sigma_membership(base).passed)
    fail(ErrorKind::HypothesisInvalid, "base drift outside the half-constant class");

  const int m = static_cast<int>(std::ceil(set.ht / 1e-3 - 1e-9));
  const double step = set.ht / m;
  const double R0 = base.default_radius();
  const double R = std::ceil(R0 / step) * step;
  auto inv0 = std::make_shared<InvariantModel>(build_invariant(base, GridSpec{R, step}));
  const auto& g = inv0->grid;
  if (!check_holder(Tabulated{g, inv0->rho}, HolderSpec{spec.beta + 1.0, spec.L / 2.0}).passed)
    fail(ErrorKind::HypothesisInvalid, "base density not in H(beta + 1, L/2)");
  auto base_ptr = std::make_shared<const DriftModel>(base);
  set.baseModel = base_ptr;
  set.base = inv0;

  const int jmax = static_cast<int>(std::floor(cls.A / (2.0 * set.ht))) - 1;
  if (jmax < 1) fail(ErrorKind::HypothesisInvalid, "t too small: no perturbation fits inside [-A, A]");
  const double amp = spec.L * std::pow(set.ht, spec.beta + 1.0);

  auto& val = set.validation;
  val.positivity = val.mass = val.holder = val.sigma = val.disjoint = val.separation = true;
  val.cStar = std::numeric_limits<double>::infinity();
  val.requiredSeparation = spec.L * std::pow(set.ht, spec.beta) * set.qScale / std::numbers::e;
  val.minSeparation = std::numeric_limits<double>::infinity();

  DriftModel target_class = base;
  target_class.classC = cls.C;
  for (int j = -jmax; j <= jmax; ++j) {
    HypothesisMember mem;
    mem.j = j;
    const std::int64_t node = 2 * m * j;
    mem.center = static_cast<double>(node) * step;
    BumpSpec bump{mem.center, set.ht, j == 0 ? 0.0 : amp, set.qScale};
    std::vector<double> rho(g.size), drho(g.size), bj(g.size);
    for (std::size_t i = 0; i < g.size; ++i) {
      const double x = g.at(i);
      rho[i] = inv0->rho[i] + bump.value(x);
      drho[i] = inv0->drho[i] + bump.derivative(x);
      bj[i] = drho[i] / (2.0 * rho[i]);
    }
    auto inv = InvariantModel::from_density(g, rho);
    inv.drho = drho;
    mem.inv = std::make_shared<const InvariantModel>(std::move(inv));
    mem.drift = Tabulated{g, bj};
    if (j == 0) {
      mem.model = target_class;
    } else {
      mem.model = target_class;
      mem.model.family = BumpPerturbed{base_ptr, inv0, bump};
    }

    for (std::size_t i = 0; i < g.size; ++i) {
      const double x = g.at(i);
      if (std::abs(x) <= cls.A) val.cStar = std::min(val.cStar, rho[i]);
      if (rho[i] < 0.0) val.positivity = false;
    }
    const double mass_err = std::abs(quad::trapezoid(rho, g.step) - 1.0);
    val.worstMassError = std::max(val.worstMassError, mass_err);
    val.mass = val.mass && mass_err <= 1e-6;
    const auto hrep = check_holder(Tabulated{g, rho}, HolderSpec{spec.beta + 1.0, spec.L});
    val.holder = val.holder && hrep.passed;
    val.worstHolder = std::max(val.worstHolder, hrep.seminorm);
    val.sigma = val.sigma && check_sigma_membership(mem.model).passed;
    set.members.push_back(std::move(mem));
  }
  val.positivity = val.positivity && val.cStar > 0.0;

  for (std::size_t a = 0; a < set.members.size(); ++a)
    for (std::size_t b = a + 1; b < set.members.size(); ++b) {
      const auto& ma = set.members[a];
      const auto& mb = set.members[b];
      if (ma.j != 0 && mb.j != 0 && std::abs(ma.center - mb.center) < 2.0 * set.ht * (1.0 - 1e-12))
        val.disjoint = false;
      double sep = 0.0;
      for (std::size_t i = 0; i < g.size; ++i)
        sep = std::max(sep, std::abs(ma.inv->drho[i] - mb.inv->drho[i]));
      val.minSeparation = std::min(val.minSeparation, sep);
      if (sep < val.requiredSeparation * (1.0 - 1e-12)) val.separation = false;
    }

  if (!val.passed()) {
    std::string what;
    if (!val.positivity) what += " positivity";
    if (!val.mass) what += " mass";
    if (!val.holder) what += " holder";
    if (!val.sigma) what += " sigma-membership";
    if (!val.disjoint) what += " disjoint-supports";
    if (!val.separation) what += " derivative-separation";
    fail(ErrorKind::HypothesisInvalid, "hypothesis invariants failed:" + what);
  }
  return set;
}

struct NormalityReport {
  double ksStatistic = 0.0;
  double pValue = 0.0;
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Asymptotic Kolmogorov tail Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_tail(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

/// One-sample KS test of samples / sqrt(targetVar) against N(0, 1).
inline NormalityReport normality_check(std::vector<double> samples, double targetVar) {
  if (samples.size() < 100) fail(ErrorKind::TooFewSamples, "normality check needs at least 100 samples");
  if (!(targetVar > 0.0)) fail(ErrorKind::DomainError, "target variance must be positive");
  const double sd = std::sqrt(targetVar);
  for (double& s : samples) s /= sd;
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double D = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double F = normal_cdf(samples[i]);
    D = std::max({D, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  return {D, kolmogorov_tail((sn + 0.12 + 0.11 / sn) * D)};
}

}  // namespace dlest
