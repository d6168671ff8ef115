#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dlest {

enum class ErrorKind {
  NonErgodicDrift,
  GridTooCoarse,
  ZeroDensity,
  TailNotResolved,
  Blowup,
  SingularMomentSystem,
  BandwidthOutOfRange,
  GridMismatch,
  DenominatorNonpositive,
  DomainError,
  KernelOrderTooLow,
  EmptyGrid,
  HypothesisInvalid,
  TooFewSamples,
  InsufficientHorizons,
  ConfigError,
  IoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonErgodicDrift: return "NonErgodicDrift";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::ZeroDensity: return "ZeroDensity";
    case ErrorKind::TailNotResolved: return "TailNotResolved";
    case ErrorKind::Blowup: return "Blowup";
    case ErrorKind::SingularMomentSystem: return "SingularMomentSystem";
    case ErrorKind::BandwidthOutOfRange: return "BandwidthOutOfRange";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::DenominatorNonpositive: return "DenominatorNonpositive";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::KernelOrderTooLow: return "KernelOrderTooLow";
    case ErrorKind::EmptyGrid: return "EmptyGrid";
    case ErrorKind::HypothesisInvalid: return "HypothesisInvalid";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::InsufficientHorizons: return "InsufficientHorizons";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Validation errors come from bad inputs (configs, arguments, model specs);
  /// everything else is a failure while running a valid request.
  bool is_validation() const noexcept {
    switch (kind_) {
      case ErrorKind::ConfigError:
      case ErrorKind::DomainError:
      case ErrorKind::BandwidthOutOfRange:
      case ErrorKind::KernelOrderTooLow:
      case ErrorKind::EmptyGrid:
      case ErrorKind::InsufficientHorizons:
      case ErrorKind::TooFewSamples:
      case ErrorKind::GridMismatch:
      case ErrorKind::NonErgodicDrift:
      case ErrorKind::HypothesisInvalid:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

/// Lattice-aligned uniform grid: node i sits at (first + i) * step.
/// Grids sharing a step share their nodes, so x = 0 and other lattice
/// points are represented exactly.
struct UniformGrid {
  double step = 0.0;
  std::int64_t first = 0;
  std::size_t size = 0;

  double at(std::size_t i) const { return static_cast<double>(first + static_cast<std::int64_t>(i)) * step; }
  double front() const { return at(0); }
  double back() const { return at(size - 1); }
  bool contains(double x) const { return size > 0 && x >= front() && x <= back(); }

  /// Smallest lattice grid covering [lo, hi].
  static UniformGrid covering(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) fail(ErrorKind::DomainError, "bad grid bounds");
    const auto a = static_cast<std::int64_t>(std::floor(lo / step + 1e-9));
    const auto b = static_cast<std::int64_t>(std::ceil(hi / step - 1e-9));
    return UniformGrid{step, a, static_cast<std::size_t>(b - a + 1)};
  }

  /// Symmetric grid [-R, R] with spacing adjusted down so that R is a node.
  static UniformGrid symmetric(double radius, double max_step) {
    if (!(radius > 0.0) || !(max_step > 0.0)) fail(ErrorKind::DomainError, "bad symmetric grid");
    const auto half = static_cast<std::int64_t>(std::ceil(radius / max_step - 1e-9));
    return UniformGrid{radius / static_cast<double>(half), -half, static_cast<std::size_t>(2 * half + 1)};
  }

  std::vector<double> nodes() const {
    std::vector<double> out(size);
    for (std::size_t i = 0; i < size; ++i) out[i] = at(i);
    return out;
  }

  friend bool operator==(const UniformGrid&, const UniformGrid&) = default;
};

/// Values sampled on a uniform grid.
struct Tabulated {
  UniformGrid grid;
  std::vector<double> values;
};

inline void require_same_grid(const UniformGrid& a, const UniformGrid& b, std::string_view what) {
  if (!(a == b)) fail(ErrorKind::GridMismatch, std::string(what));
}

namespace quad {

/// Composite trapezoid rule.
inline double trapezoid(std::span<const double> f, double step) {
  if (f.size() < 2) return 0.0;
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
  return s * step;
}

/// Second-order one-sided derivative at the left (dir=+1) or right (dir=-1) end.
inline double end_derivative(std::span<const double> f, double step, bool left) {
  const std::size_t n = f.size();
  if (n < 3) return n == 2 ? (f[1] - f[0]) / step : 0.0;
  if (left) return (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * step);
  return (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * step);
}

/// Trapezoid with the Euler-Maclaurin end correction; fourth order for smooth f.
inline double trapezoid_em(std::span<const double> f, double step) {
  if (f.size() < 3) return trapezoid(f, step);
  return trapezoid(f, step) -
         step * step / 12.0 * (end_derivative(f, step, false) - end_derivative(f, step, true));
}

/// Running trapezoid integral from the left end (out[0] = 0).
inline std::vector<double> cumulative_trapezoid(std::span<const double> f, double step) {
  std::vector<double> out(f.size(), 0.0);
  for (std::size_t i = 1; i < f.size(); ++i) out[i] = out[i - 1] + 0.5 * step * (f[i - 1] + f[i]);
  return out;
}

/// Central-difference derivative, second-order one-sided at the ends.
inline std::vector<double> derivative(std::span<const double> f, double step) {
  const std::size_t n = f.size();
  std::vector<double> d(n, 0.0);
  if (n < 2) return d;
  if (n == 2) {
    d[0] = d[1] = (f[1] - f[0]) / step;
    return d;
  }
  d[0] = end_derivative(f, step, true);
  d[n - 1] = end_derivative(f, step, false);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * step);
  return d;
}

/// Running integral from the left end with the Euler-Maclaurin correction
/// applied at every node: fourth order for smooth integrands.
inline std::vector<double> cumulative_em(std::span<const double> f, double step) {
  auto out = cumulative_trapezoid(f, step);
  if (f.size() < 3) return out;
  const auto d = derivative(f, step);
  const double h2 = step * step / 12.0;
  for (std::size_t i = 1; i < out.size(); ++i) out[i] -= h2 * (d[i] - d[0]);
  return out;
}

/// Running integral from the right end (out[n-1] = 0), fourth order.
inline std::vector<double> cumulative_em_right(std::span<const double> f, double step) {
  std::vector<double> rev(f.rbegin(), f.rend());
  auto c = cumulative_em(rev, step);
  return {c.rbegin(), c.rend()};
}

}  // namespace quad

/// Cubic Hermite interpolation on a uniform grid given values and derivatives.
inline double hermite(const UniformGrid& g, std::span<const double> f, std::span<const double> df, double x) {
  const double pos = x / g.step - static_cast<double>(g.first);
  if (pos <= 0.0) return f.front();
  if (pos >= static_cast<double>(g.size - 1)) return f.back();
  const auto i = static_cast<std::size_t>(pos);
  const double s = pos - static_cast<double>(i);
  const double h = g.step;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * f[i] + (s3 - 2 * s2 + s) * h * df[i] + (-2 * s3 + 3 * s2) * f[i + 1] +
         (s3 - s2) * h * df[i + 1];
}

/// Piecewise-linear interpolation on a uniform grid, clamped at the ends.
inline double linear_interp(const UniformGrid& g, std::span<const double> f, double x) {
  const double pos = x / g.step - static_cast<double>(g.first);
  if (pos <= 0.0) return f.front();
  if (pos >= static_cast<double>(g.size - 1)) return f.back();
  const auto i = static_cast<std::size_t>(pos);
  const double s = pos - static_cast<double>(i);
  return (1.0 - s) * f[i] + s * f[i + 1];
}

/// Greatest integer strictly smaller than x (so strict_floor(1) == 0).
inline int strict_floor(double x) { return static_cast<int>(std::ceil(x)) - 1; }

inline double factorial(int k) { return std::tgamma(static_cast<double>(k) + 1.0); }

/// exp(-1/(1-4u^2)) on |u| < 1/2, zero outside.
inline double smooth_bump(double u) {
  const double r = 1.0 - 4.0 * u * u;
  return r > 0.0 ? std::exp(-1.0 / r) : 0.0;
}

/// u * smooth_bump(u): odd, zero mass, Q(0) = 0, Q'(0) = e^{-1}.
inline double odd_bump(double u) { return u * smooth_bump(u); }

inline double odd_bump_derivative(double u) {
  const double r = 1.0 - 4.0 * u * u;
  if (r <= 0.0) return 0.0;
  return std::exp(-1.0 / r) * (1.0 - 8.0 * u * u / (r * r));
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace dlest
