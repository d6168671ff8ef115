#pragma once

//! Kernel density, stochastic-integral derivative, Nadaraya-Watson drift and
//! local-time estimators on a uniform evaluation window.

#include <dlest/kernels.hpp>
#include <dlest/model.hpp>
#include <dlest/simulate.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string_view>
#include <vector>

namespace dlest {

enum class EstimateTag { Density, Derivative, Drift, LocalTime, Truth };

inline std::string_view to_string(EstimateTag t) {
  switch (t) {
    case EstimateTag::Density: return "density";
    case EstimateTag::Derivative: return "derivative";
    case EstimateTag::Drift: return "drift";
    case EstimateTag::LocalTime: return "local_time";
    case EstimateTag::Truth: return "truth";
  }
  return "unknown";
}

struct FunctionEstimate {
  UniformGrid grid;
  std::vector<double> values;
  double bandwidth = 0.0;
  double horizon = 0.0;
  EstimateTag tag = EstimateTag::Density;

  void write_csv(std::ostream& os) const {
    os.precision(17);
    os << "x,value\n";
    for (std::size_t j = 0; j < grid.size; ++j) os << grid.at(j) << ',' << values[j] << '\n';
  }
};

/// Default window [-A-2, A+2] with spacing min(h/10, 0.01).
inline UniformGrid default_window(double classA, double h) {
  return UniformGrid::covering(-classA - 2.0, classA + 2.0, std::min(h / 10.0, 0.01));
}

/// How the occupation integral int_0^t K((x - X_s)/h) ds is discretized.
/// LeftPoint is the plain Riemann sum over the Euler nodes. LinearInterpolation
/// integrates K exactly along the piecewise-linear interpolant of the path,
/// which removes most of the grid noise at moderate step sizes.
/// BrownianBridge integrates K against the expected occupation density of a
/// Brownian bridge between consecutive nodes, i.e. the conditional mean of the
/// continuous-time integral given the observations. It removes the excess
/// variance that straight-line segments carry when |X_{i+1} - X_i| >> h.
enum class OccupationRule { LeftPoint, LinearInterpolation, BrownianBridge };

inline void check_bandwidth(double h) {
  if (!(h > 0.0) || !(h < 1.0)) fail(ErrorKind::BandwidthOutOfRange, "bandwidth must lie in (0, 1)");
}

namespace detail {

/// Index range of window nodes with |x_j - c| < r (possibly empty).
inline std::pair<std::size_t, std::size_t> nodes_within(const UniformGrid& g, double c, double r) {
  const double lo = (c - r) / g.step - static_cast<double>(g.first);
  const double hi = (c + r) / g.step - static_cast<double>(g.first);
  const double n = static_cast<double>(g.size);
  if (hi < 0.0 || lo > n - 1.0) return {1, 0};
  const auto a = static_cast<std::size_t>(std::max(0.0, std::floor(lo)));
  const auto b = static_cast<std::size_t>(std::min(n - 1.0, std::ceil(hi)));
  return {a, b};
}

/// out[j] += w_i * K((x_j - X_i)/h) for i = 0..count-1, time-ordered per node.
template <class KFun, class WFun>
void scatter(const UniformGrid& g, const double* X, std::size_t count, double h, const KFun& K, const WFun& w,
             double* out) {
  for (std::size_t i = 0; i < count; ++i) {
    const double xi = X[i];
    const double wi = w(i);
    const auto [a, b] = nodes_within(g, xi, 0.5 * h);
    for (std::size_t j = a; j <= b && a <= b; ++j) out[j] += wi * K((g.at(j) - xi) / h);
  }
}

template <class F>
decltype(auto) with_kernel(const Kernel& K, F&& f) {
  if (K.kind() == Kernel::Kind::Triangular)
    return f([](double u) { return std::abs(u) < 0.5 ? 2.0 - 4.0 * std::abs(u) : 0.0; });
  return f([&K](double u) { return K(u); });
}

/// Bridge from a to b over time dt: expected occupation density at y is
/// erfc((|y-a| + |y-b|)/sqrt(2 dt)) / (2 phi_dt(b-a)), which integrates to dt.
struct BridgeOccupation {
  double lo, hi, s, norm;
  bool valid;

  BridgeOccupation(double a, double b, double dt) : lo(std::min(a, b)), hi(std::max(a, b)), s(std::sqrt(2.0 * dt)) {
    const double D = hi - lo, e = D * D / (2.0 * dt);
    valid = e < 600.0;
    norm = valid ? 0.5 * std::sqrt(2.0 * std::numbers::pi * dt) * std::exp(e) : 0.0;
  }
  double density(double y) const {
    const double d = std::max({0.0, lo - y, y - hi});
    return norm * std::erfc((hi - lo + 2.0 * d) / s);
  }
  /// Beyond this distance from [lo, hi] the density is below e^{-36} of its plateau.
  double reach() const { return 3.0 * s; }
};

/// int (c0 + c1 y) erfc(alpha + beta y) dy over [y1, y2].
inline double linear_times_erfc(double c0, double c1, double alpha, double beta, double y1, double y2) {
  auto A0 = [](double u) { return u * std::erfc(u) - std::exp(-u * u) / std::sqrt(std::numbers::pi); };
  auto A1 = [](double u) {
    return 0.5 * u * u * std::erfc(u) - u * std::exp(-u * u) / (2.0 * std::sqrt(std::numbers::pi)) - 0.25 * std::erfc(u);
  };
  const double u1 = alpha + beta * y1, u2 = alpha + beta * y2;
  return ((c0 - c1 * alpha / beta) * (A0(u2) - A0(u1)) + c1 / beta * (A1(u2) - A1(u1))) / beta;
}

/// int K((x - y)/h) ell(y) dy for the triangular kernel, exact.
inline double bridge_triangular(const BridgeOccupation& B, double x, double h) {
  const double plateau = B.norm * std::erfc((B.hi - B.lo) / B.s);
  double total = 0.0;
  // K((x-y)/h) = 2 - 4|x-y|/h, linear on each side of x.
  for (int side = 0; side < 2; ++side) {
    const double ya = side == 0 ? x - 0.5 * h : x, yb = side == 0 ? x : x + 0.5 * h;
    const double c1 = side == 0 ? 4.0 / h : -4.0 / h;
    const double c0 = side == 0 ? 2.0 - 4.0 * x / h : 2.0 + 4.0 * x / h;
    if (const double p = std::max(ya, B.lo), q = std::min(yb, B.hi); q > p)
      total += plateau * (c0 * (q - p) + 0.5 * c1 * (q * q - p * p));
    if (const double q = std::min(yb, B.lo); q > ya)
      total += B.norm * linear_times_erfc(c0, c1, (B.hi - B.lo + 2.0 * B.lo) / B.s, -2.0 / B.s, ya, q);
    if (const double p = std::max(ya, B.hi); yb > p)
      total += B.norm * linear_times_erfc(c0, c1, (B.hi - B.lo - 2.0 * B.hi) / B.s, 2.0 / B.s, p, yb);
  }
  return total;
}

/// Same integral for an arbitrary kernel: 8-point Gauss-Legendre on pieces
/// split at lo, hi and x and no longer than s/2.
inline double bridge_generic(const BridgeOccupation& B, const Kernel& K, double x, double h) {
  static constexpr double nodes[4] = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363};
  static constexpr double weights[4] = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
  const double a = std::max(x - 0.5 * h, B.lo - B.reach()), b = std::min(x + 0.5 * h, B.hi + B.reach());
  if (!(b > a)) return 0.0;
  std::vector<double> cuts{a, b};
  for (double c : {B.lo, B.hi, x})
    if (c > a && c < b) cuts.push_back(c);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const int pieces = std::max(1, static_cast<int>(std::ceil((cuts[k + 1] - cuts[k]) / (0.5 * B.s))));
    const double w = (cuts[k + 1] - cuts[k]) / pieces;
    for (int p = 0; p < pieces; ++p) {
      const double m = cuts[k] + (p + 0.5) * w, r = 0.5 * w;
      for (int q = 0; q < 4; ++q)
        for (double sgn : {-1.0, 1.0}) {
          const double y = m + sgn * r * nodes[q];
          total += r * weights[q] * K((x - y) / h) * B.density(y);
        }
    }
  }
  return total;
}

}  // namespace detail

/// (1/(n h)) sum_{i<n} K((x_j - X_i)/h), or its interpolated-path analogue.
inline FunctionEstimate density_kde(const DiffusionPath& path, const Kernel& K, double h, const UniformGrid& xGrid,
                                    OccupationRule rule = OccupationRule::LeftPoint) {
  check_bandwidth(h);
  const std::size_t n = path.steps();
  if (n == 0) fail(ErrorKind::TooFewSamples, "path has no increments");
  FunctionEstimate est{xGrid, std::vector<double>(xGrid.size, 0.0), h, path.horizon(), EstimateTag::Density};
  const double* X = path.values.data();
  if (rule == OccupationRule::LeftPoint) {
    detail::with_kernel(K, [&](const auto& k) {
      detail::scatter(xGrid, X, n, h, k, [](std::size_t) { return 1.0; }, est.values.data());
    });
  } else if (rule == OccupationRule::BrownianBridge) {
    const double dt = path.step();
    const bool tri = K.kind() == Kernel::Kind::Triangular;
    for (std::size_t i = 0; i < n; ++i) {
      const detail::BridgeOccupation B(X[i], X[i + 1], dt);
      if (!B.valid) fail(ErrorKind::Blowup, "increment too large for the bridge occupation rule");
      const double c = 0.5 * (B.lo + B.hi), r = 0.5 * (B.hi - B.lo) + B.reach() + 0.5 * h;
      const auto [ja, jb] = detail::nodes_within(xGrid, c, r);
      for (std::size_t j = ja; j <= jb && ja <= jb; ++j) {
        const double x = xGrid.at(j);
        est.values[j] += (tri ? detail::bridge_triangular(B, x, h) : detail::bridge_generic(B, K, x, h)) / dt;
      }
    }
  } else {
    // Segment X_i -> X_{i+1}: mean of K over the segment is
    // (KK(u_a) - KK(u_b)) / (u_a - u_b) with KK the antiderivative.
    for (std::size_t i = 0; i < n; ++i) {
      const double a = X[i], b = X[i + 1];
      const double lo = std::min(a, b), hi = std::max(a, b);
      const auto [ja, jb] = detail::nodes_within(xGrid, 0.5 * (lo + hi), 0.5 * (hi - lo) + 0.5 * h);
      for (std::size_t j = ja; j <= jb && ja <= jb; ++j) {
        const double x = xGrid.at(j);
        const double ua = (x - a) / h, ub = (x - b) / h;
        const double du = ua - ub;
        est.values[j] += std::abs(du) < 1e-7 ? K(0.5 * (ua + ub)) : (K.antiderivative(ua) - K.antiderivative(ub)) / du;
      }
    }
  }
  const double scale = 1.0 / (static_cast<double>(n) * h);
  for (double& v : est.values) v *= scale;
  return est;
}

/// Forward (Ito) sum (1/(t h)) sum_i K((x_j - X_i)/h)(X_{i+1} - X_i); estimates b rho = rho'/2.
inline FunctionEstimate derivative_estimator(const DiffusionPath& path, const Kernel& K, double h,
                                             const UniformGrid& xGrid) {
  check_bandwidth(h);
  const std::size_t n = path.steps();
  if (n == 0) fail(ErrorKind::TooFewSamples, "path has no increments");
  FunctionEstimate est{xGrid, std::vector<double>(xGrid.size, 0.0), h, path.horizon(), EstimateTag::Derivative};
  const double* X = path.values.data();
  detail::with_kernel(K, [&](const auto& k) {
    detail::scatter(xGrid, X, n, h, k, [X](std::size_t i) { return X[i + 1] - X[i]; }, est.values.data());
  });
  const double scale = 1.0 / (path.horizon() * h);
  for (double& v : est.values) v *= scale;
  return est;
}

/// sqrt(log t / t) exp(sqrt(log t)).
inline double drift_ridge(double t) {
  if (!(t > 1.0)) fail(ErrorKind::DomainError, "ridge needs t > 1");
  const double l = std::log(t);
  return std::sqrt(l / t) * std::exp(std::sqrt(l));
}

/// Which bandwidth feeds the drift denominator.
struct DriftDenominatorSpec {
  enum class Kind { UniversalTMinusHalf, Simultaneous };
  Kind kind = Kind::UniversalTMinusHalf;
  double bandwidth = 0.0;  ///< used by Simultaneous

  double denominator_bandwidth(double t) const {
    return kind == Kind::UniversalTMinusHalf ? 1.0 / std::sqrt(t) : bandwidth;
  }
};

/// num / (den + ridge(t)). Negative density values are not clipped.
inline FunctionEstimate drift_estimator(const FunctionEstimate& num, const FunctionEstimate& den, double t) {
  require_same_grid(num.grid, den.grid, "drift numerator and denominator windows differ");
  if (num.tag != EstimateTag::Derivative && num.tag != EstimateTag::Truth)
    fail(ErrorKind::DomainError, "drift numerator must be a derivative estimate");
  if (den.tag != EstimateTag::Density && den.tag != EstimateTag::Truth)
    fail(ErrorKind::DomainError, "drift denominator must be a density estimate");
  const double ridge = drift_ridge(t);
  FunctionEstimate est{num.grid, std::vector<double>(num.grid.size), num.bandwidth, t, EstimateTag::Drift};
  for (std::size_t j = 0; j < est.values.size(); ++j) {
    const double d = den.values[j] + ridge;
    if (!(d > 0.0)) fail(ErrorKind::DenominatorNonpositive, "density estimate plus ridge is not positive");
    est.values[j] = num.values[j] / d;
  }
  return est;
}

inline double default_local_time_eps(double step) { return std::max(2.0 * std::sqrt(step), 1e-3); }

/// (1/t) * step * #{i < n : |X_i - x_j| < eps} / (2 eps).
inline FunctionEstimate local_time_estimator(const DiffusionPath& path, const UniformGrid& xGrid, double eps) {
  if (!(eps > 0.0)) fail(ErrorKind::DomainError, "eps must be positive");
  const std::size_t n = path.steps();
  FunctionEstimate est{xGrid, std::vector<double>(xGrid.size, 0.0), eps, path.horizon(), EstimateTag::LocalTime};
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = path.values[i];
    const auto [a, b] = detail::nodes_within(xGrid, xi, eps);
    for (std::size_t j = a; j <= b && a <= b; ++j)
      if (std::abs(xGrid.at(j) - xi) < eps) est.values[j] += 1.0;
  }
  const double scale = path.step() / (2.0 * eps * path.horizon());
  for (double& v : est.values) v *= scale;
  return est;
}

/// Samples f on the window; tagged Truth.
template <class F>
FunctionEstimate tabulate(const UniformGrid& grid, F&& f, double t = 0.0) {
  FunctionEstimate est{grid, std::vector<double>(grid.size), 0.0, t, EstimateTag::Truth};
  for (std::size_t j = 0; j < grid.size; ++j) est.values[j] = f(grid.at(j));
  return est;
}

inline double sup_distance(const FunctionEstimate& a, const FunctionEstimate& b) {
  require_same_grid(a.grid, b.grid, "sup_distance windows differ");
  double m = 0.0;
  for (std::size_t j = 0; j < a.values.size(); ++j) m = std::max(m, std::abs(a.values[j] - b.values[j]));
  return m;
}

/// max_j |(bhat - b)(x_j)| rho(x_j)^2.
inline double weighted_drift_error(const FunctionEstimate& bhat, const DriftModel& model, const InvariantModel& inv) {
  if (bhat.grid.front() < inv.grid.front() || bhat.grid.back() > inv.grid.back())
    fail(ErrorKind::GridMismatch, "drift window extends beyond the invariant grid");
  double m = 0.0;
  for (std::size_t j = 0; j < bhat.grid.size; ++j) {
    const double x = bhat.grid.at(j);
    const double r = inv.density(x);
    m = std::max(m, std::abs((bhat.values[j] - model(x)) * r * r));
  }
  return m;
}

}  // namespace dlest
