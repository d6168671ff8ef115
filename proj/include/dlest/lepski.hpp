#pragma once

//! Lepski-type bandwidth selection: variance proxy, bias bound, candidate
//! grid, threshold constants, the single and simultaneous rules, and the
//! smoothness-aware oracle bandwidth.

#include <dlest/estimators.hpp>
#include <dlest/kernels.hpp>

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

namespace dlest {

/// sqrt((log(t/h))^3 / t + log(t/h) / (t h)).
inline double sigma_bar(double h, double t) {
  if (!(h > 0.0 && h < 1.0 && t > 1.0)) fail(ErrorKind::DomainError, "sigma_bar needs 0 < h < 1 < t");
  const double l = std::log(t / h);
  return std::sqrt(l * l * l / t + l / (t * h));
}

/// B(h) = h^beta L / (2 floor(beta)!) int |K| |v|^beta, strict floor.
inline double bias_bound(double h, const HolderSpec& spec, const Kernel& K) {
  spec.validate();
  if (K.order() < strict_floor(spec.beta + 1.0))
    fail(ErrorKind::KernelOrderTooLow, "kernel order below floor(beta + 1)");
  return std::pow(h, spec.beta) * spec.L / (2.0 * factorial(spec.floor_beta())) * K.abs_moment(spec.beta);
}

struct BandwidthGrid {
  double eta = 1.25;
  double horizon = 0.0;
  std::vector<double> bandwidths;  ///< strictly decreasing

  double hMin() const { return bandwidths.back(); }
  std::size_t size() const { return bandwidths.size(); }
  bool contains(double h) const { return std::find(bandwidths.begin(), bandwidths.end(), h) != bandwidths.end(); }
};

/// Every eta^{-k}, k >= 1, above (log t)^2 / t.
inline BandwidthGrid build_grid(double t, double eta) {
  if (!(eta > 1.0) || !(t > 8.0)) fail(ErrorKind::DomainError, "build_grid needs eta > 1 and t > 8");
  const double floor_h = std::log(t) * std::log(t) / t;
  BandwidthGrid g{eta, t, {}};
  for (int k = 1;; ++k) {
    const double h = std::pow(eta, -k);
    if (!(h > floor_h)) break;
    g.bandwidths.push_back(h);
  }
  if (g.bandwidths.empty()) fail(ErrorKind::EmptyGrid, "no candidate bandwidth above (log t)^2/t");
  return g;
}

struct CalibrationConstants {
  enum class Mode { Theoretical, Override, Calibrated };

  double bdg = std::numbers::sqrt2;
  double cTilde2 = 1.0;
  double entropyV = 2.0;
  double kernelL2 = 2.0 / std::sqrt(3.0);
  Mode mode = Mode::Theoretical;
  double etaBar1Override = 0.0;
  double etaBar2Override = 0.0;
  double cOverride = 0.0;
  double factor = 1.0;  ///< Calibrated: multiplies sqrt(M)

  double etaBar1() const {
    if (mode == Mode::Override) return etaBar1Override;
    return 24.0 * cTilde2 * kernelL2 * bdg * std::numbers::e * std::sqrt(entropyV);
  }
  double etaBar2() const {
    if (mode == Mode::Override) return etaBar2Override;
    return 12.0 * bdg * kernelL2;
  }
  double C() const {
    if (mode == Mode::Override) return cOverride;
    const double s = 4.0 * etaBar1() + 2.0 * etaBar2();
    return 20.0 * std::numbers::e * std::numbers::e * s * s;
  }
  /// The multiplier applied to sigma_bar in the pair tests.
  double threshold_root(double M) const { return (mode == Mode::Calibrated ? factor : 1.0) * std::sqrt(M); }

  void validate() const {
    if (!(bdg > 0.0 && cTilde2 > 0.0 && entropyV > 0.0 && kernelL2 > 0.0))
      fail(ErrorKind::ConfigError, "calibration constants must be positive");
    if (mode == Mode::Override && !(cOverride > 0.0)) fail(ErrorKind::ConfigError, "override C must be positive");
    if (mode == Mode::Calibrated && !(factor > 0.0)) fail(ErrorKind::ConfigError, "calibration factor must be positive");
  }
};

enum class Scheme { Single, Simultaneous };

/// C(K) times the sup of the density estimate at t^{-1/2} (single) or hMin (simultaneous).
inline double m_tilde(const FunctionEstimate& reference_density, const CalibrationConstants& c) {
  return c.C() * max_abs(reference_density.values);
}

inline double m_tilde(const DiffusionPath& path, const Kernel& K, const CalibrationConstants& c,
                      const UniformGrid& xGrid, Scheme scheme, const BandwidthGrid& grid,
                      OccupationRule rule = OccupationRule::LeftPoint) {
  const double b = scheme == Scheme::Single ? 1.0 / std::sqrt(path.horizon()) : grid.hMin();
  return m_tilde(density_kde(path, K, b, xGrid, rule), c);
}

/// Shared window for a whole candidate grid: [-A-2, A+2], spacing min(hMin/10, 0.01).
inline UniformGrid selection_window(double classA, const BandwidthGrid& grid) {
  return default_window(classA, grid.hMin());
}

/// Every estimate a selection needs, computed once per path.
struct BandwidthFamily {
  BandwidthGrid grid;
  double horizon = 0.0;
  std::vector<FunctionEstimate> derivatives;  ///< rho-bar(h) per grid element
  std::vector<FunctionEstimate> densities;    ///< rho(h) per grid element (simultaneous only)
  FunctionEstimate densityReference;          ///< rho(t^{-1/2})
};

inline BandwidthFamily compute_family(const DiffusionPath& path, const Kernel& K, const BandwidthGrid& grid,
                                      const UniformGrid& xGrid, bool with_densities,
                                      OccupationRule rule = OccupationRule::LeftPoint) {
  BandwidthFamily f;
  f.grid = grid;
  f.horizon = path.horizon();
  for (double h : grid.bandwidths) {
    f.derivatives.push_back(derivative_estimator(path, K, h, xGrid));
    if (with_densities) f.densities.push_back(density_kde(path, K, h, xGrid, rule));
  }
  f.densityReference = density_kde(path, K, 1.0 / std::sqrt(path.horizon()), xGrid, rule);
  return f;
}

struct PairRow {
  double h, g, statistic, threshold;
  bool passed;
};

struct DensityRow {
  double h, statistic, threshold;
  bool passed;
};

struct SelectionTrace {
  Scheme scheme = Scheme::Single;
  double horizon = 0.0;
  double M = 0.0;
  double thresholdRoot = 0.0;
  std::vector<PairRow> perPair;
  std::optional<std::vector<DensityRow>> densityConstraint;
  double chosen = 0.0;
};

/// sqrt(h) (log(1/h))^4 / (sqrt(t) log t).
inline double density_constraint_threshold(double h, double t) {
  const double l = std::log(1.0 / h);
  return std::sqrt(h) * l * l * l * l / (std::sqrt(t) * std::log(t));
}

/// Largest h whose pair tests (and density constraint, if present) all pass.
/// hMin has no pair tests and a zero density statistic, so it always qualifies.
inline double chosen_from_trace(const SelectionTrace& tr, const BandwidthGrid& grid) {
  for (double h : grid.bandwidths) {
    bool ok = true;
    for (const auto& r : tr.perPair)
      if (r.h == h) ok = ok && r.passed;
    if (tr.densityConstraint)
      for (const auto& r : *tr.densityConstraint)
        if (r.h == h) ok = ok && r.passed;
    if (ok) return h;
  }
  return grid.hMin();
}

inline SelectionTrace select_from_family(const BandwidthFamily& fam, const CalibrationConstants& c, Scheme scheme) {
  c.validate();
  const auto& hs = fam.grid.bandwidths;
  if (hs.empty()) fail(ErrorKind::EmptyGrid, "empty candidate grid");
  const double t = fam.horizon;
  SelectionTrace tr;
  tr.scheme = scheme;
  tr.horizon = t;
  if (scheme == Scheme::Simultaneous) {
    if (fam.densities.size() != hs.size()) fail(ErrorKind::DomainError, "family lacks density estimates");
    tr.M = m_tilde(fam.densities.back(), c);
  } else {
    tr.M = m_tilde(fam.densityReference, c);
  }
  tr.thresholdRoot = c.threshold_root(tr.M);
  for (std::size_t a = 0; a < hs.size(); ++a)
    for (std::size_t b = a + 1; b < hs.size(); ++b) {
      const double stat = sup_distance(fam.derivatives[a], fam.derivatives[b]);
      const double thr = tr.thresholdRoot * sigma_bar(hs[b], t);
      tr.perPair.push_back({hs[a], hs[b], stat, thr, stat <= thr});
    }
  if (scheme == Scheme::Simultaneous) {
    std::vector<DensityRow> rows;
    for (std::size_t a = 0; a < hs.size(); ++a) {
      const double stat = sup_distance(fam.densities[a], fam.densities.back());
      const double thr = density_constraint_threshold(hs[a], t);
      rows.push_back({hs[a], stat, thr, stat <= thr});
    }
    tr.densityConstraint = std::move(rows);
  }
  tr.chosen = chosen_from_trace(tr, fam.grid);
  return tr;
}

struct Selection {
  double chosen = 0.0;
  SelectionTrace trace;
};

inline Selection select_bandwidth_single(const DiffusionPath& path, const Kernel& K, const BandwidthGrid& grid,
                                         const CalibrationConstants& c, const UniformGrid& xGrid,
                                         OccupationRule rule = OccupationRule::LeftPoint) {
  auto tr = select_from_family(compute_family(path, K, grid, xGrid, false, rule), c, Scheme::Single);
  return {tr.chosen, std::move(tr)};
}

inline Selection select_bandwidth_simultaneous(const DiffusionPath& path, const Kernel& K, const BandwidthGrid& grid,
                                               const CalibrationConstants& c, const UniformGrid& xGrid,
                                               OccupationRule rule = OccupationRule::LeftPoint) {
  auto tr = select_from_family(compute_family(path, K, grid, xGrid, true, rule), c, Scheme::Simultaneous);
  return {tr.chosen, std::move(tr)};
}

struct OracleBandwidth {
  double h = 0.0;
  bool fallback = false;  ///< no element qualified; hMin returned
};

/// max{h in grid : B(h) <= sqrt(0.8 M)/4 * sigma_bar(h, t)}.
inline OracleBandwidth oracle_bandwidth(const HolderSpec& spec, const Kernel& K, const BandwidthGrid& grid, double t,
                                        double M) {
  if (grid.bandwidths.empty()) fail(ErrorKind::EmptyGrid, "empty candidate grid");
  if (!(M > 0.0)) fail(ErrorKind::DomainError, "oracle bandwidth needs M > 0");
  const double root = std::sqrt(0.8 * M) / 4.0;
  for (double h : grid.bandwidths)
    if (bias_bound(h, spec, K) <= root * sigma_bar(h, t)) return {h, false};
  return {grid.hMin(), true};
}

}  // namespace dlest
