#pragma once

//! Drift models in the ergodic class, tabulated invariant densities, and
//! the membership / smoothness diagnostics that guard them.

#include <dlest/core.hpp>

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace dlest {

/// Smoothness metadata (beta, L). floor_beta() uses the strict floor.
struct HolderSpec {
  double beta = 1.0;
  double L = 1.0;

  int floor_beta() const { return strict_floor(beta); }
  void validate() const {
    if (!(beta > 0.0) || !(L > 0.0)) fail(ErrorKind::DomainError, "Holder spec needs beta > 0 and L > 0");
  }
};

/// Tabulated invariant law of a unit-diffusion SDE.
///
/// Normalization: rho = exp(I)/C with I(x) = int_0^x 2b. The speed measure is
/// m(dx) = exp(I(x))dx, so speedTotal = C, and the scale derivative is
/// s'(x) = exp(-I(x)), which gives ds = dx / (rho * m(R)).
struct InvariantModel {
  UniformGrid grid;
  std::vector<double> rho;
  std::vector<double> drho;  ///< rho' at the nodes
  std::vector<double> cdf;
  std::vector<double> survival;  ///< 1 - F, integrated from the right
  std::vector<double> logIntegrand;
  std::vector<double> scale;
  double normConst = 1.0;
  double speedTotal = 1.0;

  double radius() const { return grid.back(); }
  std::size_t center_index() const { return static_cast<std::size_t>(-grid.first); }

  double density(double x) const {
    if (x < grid.front() || x > grid.back()) return 0.0;
    return hermite(grid, rho, drho, x);
  }
  double density_derivative(double x) const {
    if (x < grid.front() || x > grid.back()) return 0.0;
    return linear_interp(grid, drho, x);
  }
  double cdf_at(double x) const {
    if (x <= grid.front()) return 0.0;
    if (x >= grid.back()) return 1.0;
    return hermite(grid, cdf, rho, x);
  }

  /// Inverse CDF by bisection on the node table plus linear interpolation.
  double quantile(double u) const {
    if (u <= cdf.front()) return grid.front();
    if (u >= cdf.back()) return grid.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto i = static_cast<std::size_t>(it - cdf.begin());
    const double lo = cdf[i - 1], hi = cdf[i];
    const double s = hi > lo ? (u - lo) / (hi - lo) : 0.0;
    return grid.at(i - 1) + s * grid.step;
  }

  double sup_density() const { return max_abs(rho); }

  void write_csv(std::ostream& os) const {
    os.precision(17);
    os << "x,rho,cdf,scale\n";
    for (std::size_t i = 0; i < grid.size; ++i)
      os << grid.at(i) << ',' << rho[i] << ',' << cdf[i] << ',' << scale[i] << '\n';
  }

  /// Builds the model from a density table; the grid must contain 0.
  static InvariantModel from_density(const UniformGrid& grid, std::vector<double> rho);
};

namespace detail {

/// Integral from x = 0 to every node; grid must contain 0 as a node.
inline std::vector<double> integral_from_zero(const UniformGrid& g, std::span<const double> f) {
  if (g.first > 0 || g.first + static_cast<std::int64_t>(g.size) <= 0)
    fail(ErrorKind::DomainError, "grid must contain the origin");
  const auto c = static_cast<std::size_t>(-g.first);
  std::vector<double> out(g.size, 0.0);
  const auto right = quad::cumulative_em(f.subspan(c), g.step);
  for (std::size_t i = 0; i < right.size(); ++i) out[c + i] = right[i];
  std::vector<double> rev(c + 1);
  for (std::size_t i = 0; i <= c; ++i) rev[i] = f[c - i];
  const auto left = quad::cumulative_em(rev, g.step);
  for (std::size_t i = 1; i <= c; ++i) out[c - i] = -left[i];
  return out;
}

inline void fill_distribution(InvariantModel& m) {
  const double dx = m.grid.step;
  m.cdf = quad::cumulative_em(m.rho, dx);
  m.survival = quad::cumulative_em_right(m.rho, dx);
  for (auto& v : m.cdf) v = std::clamp(v, 0.0, 1.0);
  for (auto& v : m.survival) v = std::clamp(v, 0.0, 1.0);
  std::vector<double> inv_speed(m.grid.size);
  for (std::size_t i = 0; i < m.grid.size; ++i) inv_speed[i] = std::exp(-m.logIntegrand[i]);
  m.scale = integral_from_zero(m.grid, inv_speed);
}

}  // namespace detail

inline InvariantModel InvariantModel::from_density(const UniformGrid& grid, std::vector<double> rho) {
  if (rho.size() != grid.size) fail(ErrorKind::GridMismatch, "density table size differs from grid");
  InvariantModel m;
  m.grid = grid;
  m.rho = std::move(rho);
  m.drho = quad::derivative(m.rho, grid.step);
  const double r0 = m.rho[m.center_index()];
  if (!(r0 > 0.0)) fail(ErrorKind::ZeroDensity, "density vanishes at the origin");
  m.normConst = 1.0 / r0;
  m.speedTotal = m.normConst;
  m.logIntegrand.resize(grid.size);
  for (std::size_t i = 0; i < grid.size; ++i)
    m.logIntegrand[i] = m.rho[i] > 0.0 ? std::log(m.rho[i] / r0) : -std::numeric_limits<double>::infinity();
  detail::fill_distribution(m);
  return m;
}

struct DriftModel;

/// b(x) = -gamma x. Any sign of gamma is representable; gamma <= 0 is not ergodic.
struct OrnsteinUhlenbeck {
  double gamma = 1.0;
  double operator()(double x) const { return -gamma * x; }
};

/// b(x) = -kappa tanh(lambda (x - shift)).
struct TanhShift {
  double kappa = 1.0;
  double lambda = 1.0;
  double shift = 0.0;
  double operator()(double x) const { return -kappa * std::tanh(lambda * (x - shift)); }
};

/// b(x) = sum_k coeffs[k] x^k. Covers b = 0 and b = -x^3 in tests.
struct Polynomial {
  std::vector<double> coeffs;
  double operator()(double x) const {
    double s = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) s = s * x + *it;
    return s;
  }
};

/// G(x) = amplitude * qScale * odd_bump((x - center) / width).
struct BumpSpec {
  double center = 0.0;
  double width = 1.0;
  double amplitude = 0.0;
  double qScale = 1.0;

  double value(double x) const { return amplitude * qScale * odd_bump((x - center) / width); }
  double derivative(double x) const {
    return amplitude * qScale / width * odd_bump_derivative((x - center) / width);
  }
  bool in_support(double x) const { return std::abs(x - center) < 0.5 * width; }
};

/// Drift of the density rho0 + G: b = (rho0' + G') / (2 (rho0 + G)).
struct BumpPerturbed {
  std::shared_ptr<const DriftModel> base;
  std::shared_ptr<const InvariantModel> baseInvariant;
  BumpSpec bump;
  double operator()(double x) const;
};

/// Drift from a table, linear in between, flat beyond the ends.
struct TabulatedDrift {
  Tabulated table;
  double operator()(double x) const { return linear_interp(table.grid, table.values, x); }
};

struct DriftModel {
  using Family = std::variant<OrnsteinUhlenbeck, TanhShift, Polynomial, BumpPerturbed, TabulatedDrift>;

  Family family = OrnsteinUhlenbeck{};
  double classC = 1.0;
  double classA = 1.0;
  double classGamma = 0.5;
  std::optional<HolderSpec> holder;

  double operator()(double x) const {
    return std::visit([x](const auto& f) { return f(x); }, family);
  }

  /// Hands a concrete callable to f so hot loops avoid per-call dispatch.
  template <class F>
  decltype(auto) with_drift(F&& f) const {
    return std::visit([&](const auto& b) -> decltype(auto) { return f(b); }, family);
  }

  std::string family_name() const {
    switch (family.index()) {
      case 0: return "ou";
      case 1: return "tanh";
      case 2: return "polynomial";
      case 3: return "bump";
      default: return "tabulated";
    }
  }

  /// Closed-form invariant density when one is known (OU with gamma > 0).
  std::optional<double> closed_form_density(double x) const {
    if (const auto* ou = std::get_if<OrnsteinUhlenbeck>(&family); ou && ou->gamma > 0.0)
      return std::sqrt(ou->gamma / std::numbers::pi) * std::exp(-ou->gamma * x * x);
    return std::nullopt;
  }

  double default_radius() const { return classA + 10.0 / classGamma; }

  void validate() const {
    if (!(classC > 0.0) || !(classA > 0.0) || !(classGamma > 0.0))
      fail(ErrorKind::DomainError, "class constants must be positive");
    if (holder) holder->validate();
  }

  static DriftModel ou(double gamma, double classC = 1.0, double classA = 1.0, double classGamma = 0.5) {
    DriftModel m;
    m.family = OrnsteinUhlenbeck{gamma};
    m.classC = classC;
    m.classA = classA;
    m.classGamma = classGamma;
    return m;
  }
};

inline double BumpPerturbed::operator()(double x) const {
  if (!bump.in_support(x)) return (*base)(x);
  const double r0 = baseInvariant->density(x);
  const double d0 = 2.0 * (*base)(x) * r0;
  return (d0 + bump.derivative(x)) / (2.0 * (r0 + bump.value(x)));
}

struct GridSpec {
  double radius = 0.0;  ///< 0 selects classA + 10 / classGamma
  double spacing = 1e-3;
  double tol = 1e-6;  ///< relative Richardson tolerance on the normalizing constant
};

/// Tabulates rho = exp(I)/C on a symmetric grid.
///
/// The trapezoid constant on the grid is compared with the one on every other
/// node; a relative change above spec.tol raises GridTooCoarse.
inline InvariantModel build_invariant(const DriftModel& model, GridSpec spec = {}) {
  model.validate();
  const double R = spec.radius > 0.0 ? spec.radius : model.default_radius();
  if (!(R > model.classA)) fail(ErrorKind::DomainError, "grid radius must exceed classA");
  const auto grid = UniformGrid::symmetric(R, spec.spacing);
  const std::size_t n = grid.size;

  std::vector<double> b2(n);
  model.with_drift([&](const auto& b) {
    for (std::size_t i = 0; i < n; ++i) b2[i] = 2.0 * b(grid.at(i));
  });
  for (double v : b2)
    if (!std::isfinite(v)) fail(ErrorKind::NonErgodicDrift, "drift is not finite on the grid");

  InvariantModel m;
  m.grid = grid;
  m.logIntegrand = detail::integral_from_zero(grid, b2);
  const double peak = *std::max_element(m.logIntegrand.begin(), m.logIntegrand.end());
  const double tail = std::max(m.logIntegrand.front(), m.logIntegrand.back()) - peak;
  if (tail > std::log(1e-12))
    fail(ErrorKind::NonErgodicDrift, "unnormalized density does not decay at the grid ends");

  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = std::exp(m.logIntegrand[i] - peak);
  const double c_fine = quad::trapezoid(u, grid.step);
  std::vector<double> coarse;
  for (std::size_t i = 0; i < n; i += 2) coarse.push_back(u[i]);
  const double c_coarse = quad::trapezoid(coarse, 2.0 * grid.step);
  if (std::abs(c_fine - c_coarse) > spec.tol * c_fine)
    fail(ErrorKind::GridTooCoarse, "normalizing constant not converged at this spacing");

  m.normConst = c_fine * std::exp(peak);
  m.speedTotal = m.normConst;
  m.rho.resize(n);
  m.drho.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.rho[i] = u[i] / c_fine;
    m.drho[i] = b2[i] * m.rho[i];
  }
  detail::fill_distribution(m);
  return m;
}

/// b = rho' / (2 rho) with central differences of log rho, which is exact
/// for Gaussian tables. The window defaults to the whole grid.
inline Tabulated drift_from_density(const InvariantModel& inv, std::optional<std::pair<double, double>> window = {}) {
  const auto& g = inv.grid;
  const double lo = window ? window->first : g.front();
  const double hi = window ? window->second : g.back();
  std::vector<double> logr(g.size, 0.0);
  for (std::size_t i = 0; i < g.size; ++i) {
    const double x = g.at(i);
    if (x < lo - 2.0 * g.step || x > hi + 2.0 * g.step) continue;
    if (!(inv.rho[i] >= 1e-300)) fail(ErrorKind::ZeroDensity, "density below 1e-300 inside the window");
    logr[i] = std::log(inv.rho[i]);
  }
  const auto wg = UniformGrid::covering(std::max(lo, g.front()), std::min(hi, g.back()), g.step);
  Tabulated out{wg, std::vector<double>(wg.size)};
  for (std::size_t k = 0; k < wg.size; ++k) {
    const auto i = static_cast<std::size_t>(wg.first + static_cast<std::int64_t>(k) - g.first);
    double d;
    if (i == 0) d = (logr[1] - logr[0]) / g.step;
    else if (i + 1 == g.size) d = (logr[i] - logr[i - 1]) / g.step;
    else d = (logr[i + 1] - logr[i - 1]) / (2.0 * g.step);
    out.values[k] = 0.5 * d;
  }
  return out;
}

struct SigmaViolation {
  enum class Kind { LinearGrowth, MeanReversion };
  double x;
  Kind kind;
  double drift;
};

struct SigmaReport {
  bool passed = true;
  std::vector<SigmaViolation> violations;
};

/// Probe grid [-3R, 3R] with spacing 0.01, R the default model radius.
inline UniformGrid default_probe_grid(const DriftModel& model) {
  const double R = model.default_radius();
  return UniformGrid::covering(-3.0 * R, 3.0 * R, 0.01);
}

inline SigmaReport check_sigma_membership(const DriftModel& model, std::optional<UniformGrid> probe = {}) {
  const auto g = probe ? *probe : default_probe_grid(model);
  SigmaReport rep;
  for (std::size_t i = 0; i < g.size; ++i) {
    const double x = g.at(i);
    const double b = model(x);
    if (!(std::abs(b) <= model.classC * (1.0 + std::abs(x))))
      rep.violations.push_back({x, SigmaViolation::Kind::LinearGrowth, b});
    if (std::abs(x) > model.classA && !((x > 0 ? b : -b) <= -model.classGamma))
      rep.violations.push_back({x, SigmaViolation::Kind::MeanReversion, b});
  }
  rep.passed = rep.violations.empty();
  return rep;
}

struct HolderReport {
  int floorBeta = 0;
  double exponent = 1.0;  ///< beta - floorBeta
  std::vector<double> derivativeSups;  ///< ||f^(k)||_inf, k = 0..floorBeta
  double seminorm = 0.0;
  bool passed = false;
};

/// Grid estimate of the Holder(beta, L) norm.
///
/// Derivatives come from repeated central differences (one-sided second order
/// at the ends). The seminorm of f^(floorBeta) scans every pair at lags 1..32
/// and then geometrically spaced lags up to the grid span. A pass needs every
/// estimate <= slack * L. The grid must hold at least 16 (floorBeta + 1) nodes,
/// otherwise GridTooCoarse.
inline HolderReport check_holder(const Tabulated& f, const HolderSpec& spec, double slack = 1.05) {
  spec.validate();
  HolderReport rep;
  rep.floorBeta = spec.floor_beta();
  rep.exponent = spec.beta - rep.floorBeta;
  const auto n = f.grid.size;
  if (n < 16 * static_cast<std::size_t>(rep.floorBeta + 1) || f.values.size() != n)
    fail(ErrorKind::GridTooCoarse, "too few nodes for the Holder stencil");

  std::vector<double> d = f.values;
  for (int k = 0; k <= rep.floorBeta; ++k) {
    if (k > 0) d = quad::derivative(d, f.grid.step);
    rep.derivativeSups.push_back(max_abs(d));
  }
  auto scan = [&](std::size_t lag) {
    const double denom = std::pow(static_cast<double>(lag) * f.grid.step, rep.exponent);
    double m = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) m = std::max(m, std::abs(d[i + lag] - d[i]));
    rep.seminorm = std::max(rep.seminorm, m / denom);
  };
  std::size_t lag = 1;
  for (; lag <= 32 && lag < n; ++lag) scan(lag);
  for (double g = 32.0 * 1.25; static_cast<std::size_t>(g) < n; g *= 1.25) scan(static_cast<std::size_t>(g));

  const double bound = slack * spec.L;
  rep.passed = rep.seminorm <= bound;
  for (double s : rep.derivativeSups) rep.passed = rep.passed && s <= bound;
  return rep;
}

namespace detail {

/// Nodes 5% of the span in from each end. F and 1 - F vanish at the grid ends
/// by construction, so tail integrands are probed slightly inside.
inline std::pair<std::size_t, std::size_t> tail_probes(std::size_t n) {
  const std::size_t k = n / 20;
  return {k, n - 1 - k};
}

}  // namespace detail

struct DonskerDiagnostics {
  double condA = 0.0;
  double leftHalf = 0.0;
  double rightHalf = 0.0;
  std::vector<double> condBx;
  std::vector<double> condBtail;
  bool passed = false;
};

/// Integrability of F^2 (1-F)^2 / (rho m(R)) and the left-tail decay of
/// rho^2 |s| log log |s|, sampled at x = -kR/16, k = 4..16.
inline DonskerDiagnostics donsker_condition_diagnostics(const InvariantModel& inv) {
  const auto& g = inv.grid;
  const auto n = g.size;
  std::vector<double> integrand(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double F = inv.cdf[i], S = inv.survival[i];
    const double w = inv.rho[i] * inv.speedTotal;
    integrand[i] = w > 0.0 ? F * F * S * S / w : 0.0;
  }
  const double peak = max_abs(integrand);
  const auto [pl, pr] = detail::tail_probes(n);
  if (!std::isfinite(peak) || integrand[pl] > 1e-8 * peak || integrand[pr] > 1e-8 * peak)
    fail(ErrorKind::TailNotResolved, "condition (a) integrand not negligible at the grid ends");

  DonskerDiagnostics d;
  const auto c = inv.center_index();
  d.leftHalf = quad::trapezoid(std::span<const double>(integrand).first(c + 1), g.step);
  d.rightHalf = quad::trapezoid(std::span<const double>(integrand).subspan(c), g.step);
  d.condA = d.leftHalf + d.rightHalf;

  const double R = inv.radius();
  for (int k = 4; k <= 16; ++k) {
    const double x = -R * k / 16.0;
    const double s = std::abs(linear_interp(g, inv.scale, x));
    if (!(s > std::numbers::e) || !std::isfinite(s)) continue;
    const double r = inv.density(x);
    d.condBx.push_back(x);
    d.condBtail.push_back(r * r * s * std::log(std::log(s)));
  }
  bool decreasing = true;
  if (!d.condBtail.empty()) {
    const auto top = std::max_element(d.condBtail.begin(), d.condBtail.end()) - d.condBtail.begin();
    for (auto i = static_cast<std::size_t>(top) + 1; i < d.condBtail.size(); ++i)
      decreasing = decreasing && d.condBtail[i] <= d.condBtail[i - 1] * (1.0 + 1e-12);
  }
  d.passed = std::isfinite(d.condA) && decreasing && !d.condBtail.empty() && d.condBtail.back() < 1e-6;
  return d;
}

}  // namespace dlest
