#pragma once

//! Monte Carlo risk driver, rate fitting, efficiency study and lower-bound
//! corpus, with deterministic parallel replication.

#include <dlest/asymptotics.hpp>
#include <dlest/estimators.hpp>
#include <dlest/io.hpp>
#include <dlest/lepski.hpp>
#include <dlest/model.hpp>
#include <dlest/simulate.hpp>

#include <atomic>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

namespace dlest {

inline constexpr std::string_view kVersion = "dlest 1.0.0";

/// Runs job(i) for i in [0, count) on `threads` workers. Each job writes only
/// its own slot, so results do not depend on scheduling.
template <class Job>
void parallel_for(std::size_t count, unsigned threads, Job&& job) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct SampleStats {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stderr_ = std::numeric_limits<double>::quiet_NaN();
  std::size_t valid = 0;
};

/// Mean and SD/sqrt(n) over the finite entries.
inline SampleStats sample_stats(const std::vector<double>& v) {
  SampleStats s;
  double sum = 0.0;
  for (double x : v)
    if (std::isfinite(x)) {
      sum += x;
      ++s.valid;
    }
  if (s.valid == 0) return s;
  s.mean = sum / static_cast<double>(s.valid);
  if (s.valid < 2) return s;
  double ss = 0.0;
  for (double x : v)
    if (std::isfinite(x)) ss += (x - s.mean) * (x - s.mean);
  s.stderr_ = std::sqrt(ss / static_cast<double>(s.valid - 1)) / std::sqrt(static_cast<double>(s.valid));
  return s;
}

struct RiskCell {
  Target target = Target::DensityRisk;
  double horizon = 0.0;
  std::vector<double> values;      ///< per replication; NaN where it failed
  std::vector<double> bandwidths;  ///< bandwidth used per replication
  std::vector<std::string> failures;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t valid = 0;
  bool degraded = false;
};

struct ComparatorRow {
  double horizon = 0.0;
  std::vector<double> bandwidths;
  std::vector<double> perBandwidthRisk;  ///< mean risk of rho-bar at each fixed h
  std::vector<std::vector<double>> perReplicationRisk;  ///< [replication][bandwidth]
  double bestFixedBandwidth = 0.0;
  double bestFixedRisk = 0.0;
  double selectedRisk = 0.0;
  std::optional<double> oracleBandwidth;
  std::optional<double> oracleRisk;
  bool oracleFallback = false;
};

struct SimultaneousRow {
  double horizon = 0.0;
  std::vector<double> densityGap;        ///< sqrt(t) |rho(h-hat) - rho(hMin)|
  std::vector<double> densityThreshold;  ///< sqrt(t) times the constraint threshold at h-hat
  std::vector<double> singleDriftRisk;
  std::vector<double> simultaneousDriftRisk;
};

struct RateFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  double intercept = 0.0;
  std::optional<double> targetExponent;
  std::size_t horizons = 0;
};

struct RiskReport {
  std::string configHash;
  std::uint64_t masterSeed = 0;
  std::size_t replications = 0;
  std::vector<double> tGrid;
  std::vector<RiskCell> cells;
  std::vector<ComparatorRow> comparators;
  std::vector<SimultaneousRow> simultaneous;
  std::map<Target, RateFit> fits;
  std::optional<DonskerDiagnostics> donsker;
  /// Selection traces per horizon and replication, kept on request.
  std::vector<std::vector<SelectionTrace>> singleTraces, simultaneousTraces;

  const RiskCell* cell(Target target, double t) const {
    for (const auto& c : cells)
      if (c.target == target && c.horizon == t) return &c;
    return nullptr;
  }
};

inline double target_exponent(double beta) { return beta / (2.0 * beta + 1.0); }

/// OLS of log(risk) on log(log t / t).
inline RateFit fit_rate(const std::vector<double>& horizons, const std::vector<double>& risks,
                        std::optional<double> beta = {}) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < horizons.size() && i < risks.size(); ++i)
    if (std::isfinite(risks[i]) && risks[i] > 0.0 && horizons[i] > 1.0) {
      xs.push_back(std::log(std::log(horizons[i]) / horizons[i]));
      ys.push_back(std::log(risks[i]));
    }
  if (xs.size() < 3) fail(ErrorKind::InsufficientHorizons, "rate fit needs at least 3 horizons");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  RateFit f;
  f.horizons = xs.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - f.intercept - f.slope * xs[i];
    ssr += r * r;
  }
  f.stderr_ = std::sqrt(ssr / (n - 2.0) / sxx);
  if (beta) f.targetExponent = target_exponent(*beta);
  return f;
}

inline RateFit fit_rate(const RiskReport& report, Target target, std::optional<double> beta = {}) {
  std::vector<double> ts, rs;
  for (const auto& c : report.cells)
    if (c.target == target) {
      ts.push_back(c.horizon);
      rs.push_back(c.mean);
    }
  return fit_rate(ts, rs, beta);
}

/// Shared, read-only state of one experiment.
struct ExperimentContext {
  ExperimentConfig config;
  DriftModel model;
  InvariantModel inv;
  Kernel kernel;

  explicit ExperimentContext(const ExperimentConfig& c)
      : config(c), model(parse_model(c.modelSpec)), inv(build_invariant(model, c.gridSpec)),
        kernel(kernel_by_name(c.kernelName)) {}

  /// Evaluation window with spacing min(h/10, 0.01).
  UniformGrid window(double h) const {
    if (!config.window) return default_window(model.classA, h);
    return UniformGrid::covering(config.window->first, config.window->second, std::min(h / 10.0, 0.01));
  }

  SimConfig sim_config(double t) const {
    SimConfig s;
    s.horizon = t;
    s.step = config.step;
    s.init = config.init;
    if (config.init == InitKind::Fixed) s.x0 = config.initValue;
    if (config.init == InitKind::BurnIn) s.burnIn = config.initValue;
    return s;
  }

  FunctionEstimate true_density(const UniformGrid& w) const {
    return tabulate(w, [&](double x) { return inv.density(x); });
  }
  /// b rho = rho'/2, the target of the derivative estimator.
  FunctionEstimate true_derivative(const UniformGrid& w) const {
    return tabulate(w, [&](double x) { return model(x) * inv.density(x); });
  }
  FunctionEstimate true_drift(const UniformGrid& w) const {
    return tabulate(w, [&](double x) { return model(x); });
  }
};

namespace detail {

struct ReplicationOutcome {
  std::uint64_t seed = 0;
  std::string error;
  std::map<Target, double> risk, bandwidth;
  std::vector<double> perBandwidthRisk;
  std::optional<double> oracleRisk;
  double selected = 0.0;  ///< single-scheme rho-bar risk
  double densityGap = 0.0, densityThreshold = 0.0, singleDrift = 0.0;
  std::optional<SelectionTrace> single, simultaneous;
};

inline std::size_t index_of(const BandwidthGrid& g, double h) {
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.bandwidths[k] == h) return k;
  fail(ErrorKind::DomainError, "bandwidth not in the candidate grid");
}

inline void as_truth(FunctionEstimate& est, const FunctionEstimate& truth) { est.values = truth.values; }

inline ReplicationOutcome run_replication(const ExperimentContext& ctx, std::size_t ti, std::size_t r) {
  const auto& cfg = ctx.config;
  const double t = cfg.tGrid[ti];
  ReplicationOutcome out;
  out.seed = derive_seed(cfg.masterSeed, ti, r);
  const bool hook = cfg.truthAsEstimate;
  try {
    const auto path = simulate_path(ctx.model, ctx.inv, ctx.sim_config(t), out.seed);
    const double hRef = 1.0 / std::sqrt(t);

    if (cfg.has(Target::DensityRisk)) {
      const auto w = ctx.window(hRef);
      const auto truth = ctx.true_density(w);
      auto est = density_kde(path, ctx.kernel, hRef, w, cfg.occupation);
      if (hook) as_truth(est, truth);
      out.risk[Target::DensityRisk] = sup_distance(est, truth);
      out.bandwidth[Target::DensityRisk] = hRef;
    }

    const bool family = cfg.has(Target::DerivativeRisk) || cfg.has(Target::DriftRisk) || cfg.has(Target::Simultaneous);
    const bool oracle = cfg.has(Target::OracleRisk) || (family && ctx.model.holder);
    if (!family && !oracle) return out;

    const auto grid = build_grid(t, cfg.eta);
    const auto w = ctx.window(grid.hMin());
    const auto truthD = ctx.true_derivative(w);

    std::optional<OracleBandwidth> ob;
    if (oracle) {
      if (!ctx.model.holder) fail(ErrorKind::ConfigError, "oracle risk needs model.holder");
      ob = oracle_bandwidth(*ctx.model.holder, ctx.kernel, grid, t, cfg.oracleM);
    }

    if (!family) {
      auto est = derivative_estimator(path, ctx.kernel, ob->h, w);
      if (hook) as_truth(est, truthD);
      out.oracleRisk = sup_distance(est, truthD);
      out.risk[Target::OracleRisk] = *out.oracleRisk;
      out.bandwidth[Target::OracleRisk] = ob->h;
      return out;
    }

    auto fam = compute_family(path, ctx.kernel, grid, w, cfg.has(Target::Simultaneous), cfg.occupation);
    if (hook) {
      const auto truthRho = ctx.true_density(w);
      for (auto& d : fam.derivatives) as_truth(d, truthD);
      for (auto& d : fam.densities) as_truth(d, truthRho);
      as_truth(fam.densityReference, truthRho);
    }
    for (const auto& d : fam.derivatives) out.perBandwidthRisk.push_back(sup_distance(d, truthD));
    if (ob) {
      out.oracleRisk = out.perBandwidthRisk[index_of(grid, ob->h)];
      if (cfg.has(Target::OracleRisk)) {
        out.risk[Target::OracleRisk] = *out.oracleRisk;
        out.bandwidth[Target::OracleRisk] = ob->h;
      }
    }

    auto single = select_from_family(fam, cfg.calibration, Scheme::Single);
    const auto ks = index_of(grid, single.chosen);
    out.selected = out.perBandwidthRisk[ks];
    if (cfg.has(Target::DerivativeRisk)) {
      out.risk[Target::DerivativeRisk] = out.perBandwidthRisk[ks];
      out.bandwidth[Target::DerivativeRisk] = single.chosen;
    }
    const auto truthB = ctx.true_drift(w);
    auto drift_risk = [&](const FunctionEstimate& num, const FunctionEstimate& den) {
      auto b = drift_estimator(num, den, t);
      if (hook) as_truth(b, truthB);
      return weighted_drift_error(b, ctx.model, ctx.inv);
    };
    if (cfg.has(Target::DriftRisk) || cfg.has(Target::Simultaneous)) {
      out.singleDrift = drift_risk(fam.derivatives[ks], fam.densityReference);
      if (cfg.has(Target::DriftRisk)) {
        out.risk[Target::DriftRisk] = out.singleDrift;
        out.bandwidth[Target::DriftRisk] = single.chosen;
      }
    }
    if (cfg.has(Target::Simultaneous)) {
      auto sim = select_from_family(fam, cfg.calibration, Scheme::Simultaneous);
      const auto kk = index_of(grid, sim.chosen);
      out.risk[Target::Simultaneous] = drift_risk(fam.derivatives[kk], fam.densities[kk]);
      out.bandwidth[Target::Simultaneous] = sim.chosen;
      const double st = std::sqrt(t);
      out.densityGap = st * sup_distance(fam.densities[kk], fam.densities.back());
      out.densityThreshold = st * density_constraint_threshold(sim.chosen, t);
      if (cfg.keepTraces) out.simultaneous = std::move(sim);
    }
    if (cfg.keepTraces) out.single = std::move(single);
  } catch (const std::exception& e) {
    out.error = e.what();
    out.risk.clear();
  }
  return out;
}

}  // namespace detail

/// Replications run on `threads` workers (0 = hardware concurrency). The
/// report is assembled in (horizon, replication) order, so it does not depend
/// on the thread count.
inline RiskReport run_mc_risk(const ExperimentConfig& config, unsigned threads = 0) {
  config.validate();
  if (config.tGrid.empty()) fail(ErrorKind::ConfigError, "tGrid is empty");
  const ExperimentContext ctx(config);
  const std::size_t N = config.replications, T = config.tGrid.size();
  std::vector<detail::ReplicationOutcome> outcomes(N * T);
  parallel_for(N * T, threads, [&](std::size_t i) { outcomes[i] = detail::run_replication(ctx, i / N, i % N); });

  RiskReport rep;
  rep.configHash = config_hash(config);
  rep.masterSeed = config.masterSeed;
  rep.replications = N;
  rep.tGrid = config.tGrid;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (Target target : config.targets) {
    if (target == Target::Efficiency || target == Target::Donsker || target == Target::LowerBoundCorpus) continue;
    for (std::size_t ti = 0; ti < T; ++ti) {
      RiskCell c;
      c.target = target;
      c.horizon = config.tGrid[ti];
      for (std::size_t r = 0; r < N; ++r) {
        const auto& o = outcomes[ti * N + r];
        const auto it = o.risk.find(target);
        c.values.push_back(it != o.risk.end() ? it->second : nan);
        const auto bt = o.bandwidth.find(target);
        c.bandwidths.push_back(bt != o.bandwidth.end() ? bt->second : nan);
        if (!o.error.empty()) c.failures.push_back("replication " + std::to_string(r) + ": " + o.error);
      }
      const auto s = sample_stats(c.values);
      c.mean = s.mean;
      c.stderr_ = s.stderr_;
      c.valid = s.valid;
      c.degraded = !c.failures.empty();
      rep.cells.push_back(std::move(c));
    }
  }

  const bool family = config.has(Target::DerivativeRisk) || config.has(Target::DriftRisk) ||
                      config.has(Target::Simultaneous);
  for (std::size_t ti = 0; ti < T && family; ++ti) {
    const double t = config.tGrid[ti];
    ComparatorRow row;
    row.horizon = t;
    const auto grid = build_grid(t, config.eta);
    row.bandwidths = grid.bandwidths;
    std::vector<double> oracle;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      std::vector<double> v;
      for (std::size_t r = 0; r < N; ++r) {
        const auto& o = outcomes[ti * N + r];
        v.push_back(o.error.empty() ? o.perBandwidthRisk[k] : nan);
      }
      row.perBandwidthRisk.push_back(sample_stats(v).mean);
    }
    const auto best = std::min_element(row.perBandwidthRisk.begin(), row.perBandwidthRisk.end());
    for (std::size_t r = 0; r < N; ++r) {
      const auto& o = outcomes[ti * N + r];
      row.perReplicationRisk.push_back(o.error.empty() ? o.perBandwidthRisk : std::vector<double>(grid.size(), nan));
    }
    row.bestFixedRisk = *best;
    row.bestFixedBandwidth = grid.bandwidths[static_cast<std::size_t>(best - row.perBandwidthRisk.begin())];
    std::vector<double> sel;
    for (std::size_t r = 0; r < N; ++r) {
      const auto& o = outcomes[ti * N + r];
      if (!o.error.empty()) {
        sel.push_back(nan);
        oracle.push_back(nan);
        continue;
      }
      sel.push_back(o.selected);
      oracle.push_back(o.oracleRisk.value_or(nan));
    }
    row.selectedRisk = sample_stats(sel).mean;
    if (ctx.model.holder) {
      const auto ob = oracle_bandwidth(*ctx.model.holder, ctx.kernel, grid, t, config.oracleM);
      row.oracleBandwidth = ob.h;
      row.oracleFallback = ob.fallback;
      row.oracleRisk = sample_stats(oracle).mean;
    }
    rep.comparators.push_back(std::move(row));
  }

  for (std::size_t ti = 0; ti < T && config.has(Target::Simultaneous); ++ti) {
    SimultaneousRow row;
    row.horizon = config.tGrid[ti];
    for (std::size_t r = 0; r < N; ++r) {
      const auto& o = outcomes[ti * N + r];
      const bool ok = o.error.empty();
      row.densityGap.push_back(ok ? o.densityGap : nan);
      row.densityThreshold.push_back(ok ? o.densityThreshold : nan);
      row.singleDriftRisk.push_back(ok ? o.singleDrift : nan);
      row.simultaneousDriftRisk.push_back(ok ? o.risk.at(Target::Simultaneous) : nan);
    }
    rep.simultaneous.push_back(std::move(row));
  }

  if (config.keepTraces) {
    rep.singleTraces.resize(T);
    rep.simultaneousTraces.resize(T);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      if (outcomes[i].single) rep.singleTraces[i / N].push_back(*outcomes[i].single);
      if (outcomes[i].simultaneous) rep.simultaneousTraces[i / N].push_back(*outcomes[i].simultaneous);
    }
  }

  std::optional<double> beta;
  if (ctx.model.holder) beta = ctx.model.holder->beta;
  for (Target target : config.targets) {
    std::size_t n = 0;
    for (const auto& c : rep.cells)
      if (c.target == target && std::isfinite(c.mean) && c.mean > 0.0) ++n;
    if (n >= 3) rep.fits[target] = fit_rate(rep, target, beta);
  }
  if (config.has(Target::Donsker)) rep.donsker = donsker_condition_diagnostics(ctx.inv);
  return rep;
}

inline json to_json(const RateFit& f) {
  json j{{"slope", f.slope}, {"stderr", f.stderr_}, {"intercept", f.intercept}, {"horizons", f.horizons}};
  j["targetExponent"] = f.targetExponent ? json(*f.targetExponent) : json(nullptr);
  return j;
}

inline json to_json(const DonskerDiagnostics& d) {
  return json{{"condA", d.condA},         {"leftHalf", d.leftHalf}, {"rightHalf", d.rightHalf},
              {"condBx", d.condBx},       {"condBtail", d.condBtail}, {"passed", d.passed}};
}

inline json to_json(const RiskReport& r) {
  json j;
  j["version"] = kVersion;
  j["configHash"] = r.configHash;
  j["masterSeed"] = r.masterSeed;
  j["replications"] = r.replications;
  j["tGrid"] = r.tGrid;
  json cells = json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"target", to_string(c.target)},
                     {"t", c.horizon},
                     {"mean", c.mean},
                     {"stderr", c.stderr_},
                     {"valid", c.valid},
                     {"degraded", c.degraded},
                     {"failures", c.failures},
                     {"values", c.values},
                     {"bandwidths", c.bandwidths}});
  j["cells"] = std::move(cells);
  json comps = json::array();
  for (const auto& c : r.comparators) {
    json row{{"t", c.horizon},
             {"bandwidths", c.bandwidths},
             {"perBandwidthRisk", c.perBandwidthRisk},
             {"perReplicationRisk", c.perReplicationRisk},
             {"bestFixedBandwidth", c.bestFixedBandwidth},
             {"bestFixedRisk", c.bestFixedRisk},
             {"selectedRisk", c.selectedRisk}};
    row["oracleBandwidth"] = c.oracleBandwidth ? json(*c.oracleBandwidth) : json(nullptr);
    row["oracleRisk"] = c.oracleRisk ? json(*c.oracleRisk) : json(nullptr);
    row["oracleFallback"] = c.oracleFallback;
    comps.push_back(std::move(row));
  }
  j["comparators"] = std::move(comps);
  json sims = json::array();
  for (const auto& s : r.simultaneous)
    sims.push_back({{"t", s.horizon},
                    {"densityGap", s.densityGap},
                    {"densityThreshold", s.densityThreshold},
                    {"singleDriftRisk", s.singleDriftRisk},
                    {"simultaneousDriftRisk", s.simultaneousDriftRisk}});
  j["simultaneous"] = std::move(sims);
  json fits = json::object();
  for (const auto& [t, f] : r.fits) fits[std::string(to_string(t))] = to_json(f);
  j["fits"] = std::move(fits);
  if (r.donsker) j["donsker"] = to_json(*r.donsker);
  return j;
}

/// Summary table: one row per (target, t).
inline std::string risk_table_csv(const RiskReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "target,t,mean,stderr,valid,degraded\n";
  for (const auto& c : r.cells)
    os << to_string(c.target) << ',' << c.horizon << ',' << c.mean << ',' << c.stderr_ << ',' << c.valid << ','
       << (c.degraded ? 1 : 0) << '\n';
  return os.str();
}

/// One row per (target, t, replication).
inline std::string replication_csv(const RiskReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "target,t,replication,risk,bandwidth\n";
  for (const auto& c : r.cells)
    for (std::size_t i = 0; i < c.values.size(); ++i)
      os << to_string(c.target) << ',' << c.horizon << ',' << i << ',' << c.values[i] << ',' << c.bandwidths[i] << '\n';
  return os.str();
}

/// Config hash, seed and tool versions, written next to every output.
inline json make_manifest(const ExperimentConfig& c, std::string_view command) {
  json j;
  j["tool"] = kVersion;
  j["command"] = command;
  j["configHash"] = config_hash(c);
  j["masterSeed"] = c.masterSeed;
  j["rng"] = kRngName;
  j["compiler"] = __VERSION__;
  j["json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
              std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  j["config"] = c.raw;
  return j;
}

// ---------------------------------------------------------------------------
// Efficiency

/// Jackknife estimate of the variance of the sample variance.
inline double jackknife_variance_of_variance(const std::vector<double>& s) {
  const std::size_t n = s.size();
  if (n < 3) fail(ErrorKind::TooFewSamples, "jackknife needs at least 3 samples");
  double sum = 0.0, sum2 = 0.0;
  for (double x : s) {
    sum += x;
    sum2 += x * x;
  }
  const double dn = static_cast<double>(n);
  std::vector<double> loo(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = (sum - s[i]) / (dn - 1.0);
    loo[i] = ((sum2 - s[i] * s[i]) - (dn - 1.0) * m * m) / (dn - 2.0);
    mean += loo[i];
  }
  mean /= dn;
  double acc = 0.0;
  for (double v : loo) acc += (v - mean) * (v - mean);
  return (dn - 1.0) / dn * acc;
}

struct EfficiencyPoint {
  double x = 0.0;
  double rho = 0.0;
  std::vector<double> samples;  ///< sqrt(t)(rho_hat(x) - rho(x)) per replication
  double mcVariance = 0.0;
  double crValue = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  bool skipped = false;  ///< both variances below the floor
  std::optional<NormalityReport> ks;
  double varianceOfVariance = 0.0;
};

struct EfficiencyReport {
  double horizon = 0.0;
  double step = 0.0;
  std::size_t replications = 0;
  std::vector<EfficiencyPoint> points;
};

inline constexpr double kEfficiencyFloor = 1e-6;

namespace detail {

/// One-node window holding exactly x.
inline UniformGrid point_grid(double x) {
  if (x == 0.0) return UniformGrid{1.0, 0, 1};
  return UniformGrid{std::abs(x), x > 0.0 ? 1 : -1, 1};
}

}  // namespace detail

/// sqrt(t)(rho_t(t^{-1/2})(x) - rho(x)) over N replications at t = tGrid[0].
inline EfficiencyReport run_efficiency_study(const ExperimentConfig& config, unsigned threads = 0) {
  config.validate();
  if (config.tGrid.empty()) fail(ErrorKind::ConfigError, "tGrid is empty");
  if (config.efficiencyPoints.empty()) fail(ErrorKind::ConfigError, "efficiency needs evaluation points");
  const ExperimentContext ctx(config);
  const double t = config.tGrid.front(), h = 1.0 / std::sqrt(t);
  const std::size_t N = config.replications, P = config.efficiencyPoints.size();
  std::vector<double> raw(N * P);
  parallel_for(N, threads, [&](std::size_t r) {
    const auto path = simulate_path(ctx.model, ctx.inv, ctx.sim_config(t), derive_seed(config.masterSeed, 0, r));
    for (std::size_t p = 0; p < P; ++p) {
      const double x = config.efficiencyPoints[p];
      const double est = density_kde(path, ctx.kernel, h, detail::point_grid(x), config.occupation).values[0];
      raw[r * P + p] = std::sqrt(t) * (est - ctx.inv.density(x));
    }
  });
  EfficiencyReport rep{t, config.step, N, {}};
  for (std::size_t p = 0; p < P; ++p) {
    EfficiencyPoint pt;
    pt.x = config.efficiencyPoints[p];
    pt.rho = ctx.inv.density(pt.x);
    for (std::size_t r = 0; r < N; ++r) pt.samples.push_back(raw[r * P + p]);
    const auto s = sample_stats(pt.samples);
    pt.mcVariance = s.stderr_ * s.stderr_ * static_cast<double>(s.valid);
    pt.crValue = cramer_rao_point(ctx.inv, pt.x);
    pt.varianceOfVariance = N >= 3 ? jackknife_variance_of_variance(pt.samples) : 0.0;
    pt.skipped = pt.crValue < kEfficiencyFloor && pt.mcVariance < kEfficiencyFloor;
    if (!pt.skipped) {
      pt.ratio = pt.mcVariance / pt.crValue;
      if (N >= 100) pt.ks = normality_check(pt.samples, pt.crValue);
    }
    rep.points.push_back(std::move(pt));
  }
  return rep;
}

inline json to_json(const EfficiencyReport& r) {
  json pts = json::array();
  for (const auto& p : r.points) {
    json j{{"x", p.x},          {"rho", p.rho},       {"mcVariance", p.mcVariance}, {"crValue", p.crValue},
           {"ratio", p.ratio},  {"skipped", p.skipped}, {"varianceOfVariance", p.varianceOfVariance}};
    j["ks"] = p.ks ? json{{"statistic", p.ks->ksStatistic}, {"pValue", p.ks->pValue}} : json(nullptr);
    j["samples"] = p.samples;
    pts.push_back(std::move(j));
  }
  return json{{"version", kVersion}, {"t", r.horizon}, {"step", r.step}, {"replications", r.replications},
              {"points", std::move(pts)}};
}

// ---------------------------------------------------------------------------
// Lower-bound corpus

struct CorpusMemberResult {
  int j = 0;
  double center = 0.0;
  double risk = std::numeric_limits<double>::quiet_NaN();
  double bandwidth = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct LowerBoundReport {
  HypothesisSet set;
  std::vector<CorpusMemberResult> members;
  double worstRisk = 0.0;
  double baseRisk = 0.0;
};

/// Builds and validates the hypotheses around the configured model, writes
/// one CSV per member plus hypotheses.json into `outDir` (if non-empty) and
/// runs the single-scheme adaptive derivative estimator on one path per member.
inline LowerBoundReport run_lowerbound_corpus(const ExperimentConfig& config, const std::string& outDir = {},
                                              unsigned threads = 0) {
  config.validate();
  const auto b0 = parse_model(config.modelSpec);
  const HolderSpec spec = b0.holder.value_or(HolderSpec{1.0, 5.0});
  const ClassParams cls{b0.classC, b0.classA, b0.classGamma};
  const double t = config.lowerboundT;
  LowerBoundReport rep;
  rep.set = build_hypotheses(b0, spec, cls, config.lowerboundV, t);
  const auto& set = rep.set;
  const auto K = kernel_by_name(config.kernelName);

  if (!outDir.empty()) {
    std::filesystem::create_directories(outDir);
    const double lim = cls.A + 2.0;
    for (const auto& m : set.members) {
      std::ostringstream os;
      os.precision(17);
      os << "x,rho,drho,drift\n";
      const auto& g = m.inv->grid;
      for (std::size_t i = 0; i < g.size; ++i)
        if (std::abs(g.at(i)) <= lim)
          os << g.at(i) << ',' << m.inv->rho[i] << ',' << m.inv->drho[i] << ',' << m.drift.values[i] << '\n';
      write_text((std::filesystem::path(outDir) / ("member_" + std::to_string(m.j) + ".csv")).string(), os.str());
    }
    write_text((std::filesystem::path(outDir) / "hypotheses.json").string(), to_json(set).dump(2) + "\n");
  }

  rep.members.resize(set.members.size());
  parallel_for(set.members.size(), threads, [&](std::size_t k) {
    const auto& m = set.members[k];
    auto& res = rep.members[k];
    res.j = m.j;
    res.center = m.center;
    try {
      SimConfig sc;
      sc.horizon = t;
      sc.step = config.step;
      // Common random numbers: every member sees the same noise.
      const auto path = simulate_path(m.model, *m.inv, sc, derive_seed(config.masterSeed, 0, 0));
      const auto grid = build_grid(t, config.eta);
      const auto w = config.window ? UniformGrid::covering(config.window->first, config.window->second,
                                                           std::min(grid.hMin() / 10.0, 0.01))
                                   : default_window(cls.A, grid.hMin());
      const auto fam = compute_family(path, K, grid, w, false, config.occupation);
      const auto tr = select_from_family(fam, config.calibration, Scheme::Single);
      const auto truth = tabulate(w, [&](double x) { return 0.5 * m.inv->density_derivative(x); });
      res.bandwidth = tr.chosen;
      res.risk = sup_distance(fam.derivatives[detail::index_of(grid, tr.chosen)], truth);
    } catch (const std::exception& e) {
      res.error = e.what();
    }
  });
  for (const auto& m : rep.members) {
    if (std::isfinite(m.risk)) rep.worstRisk = std::max(rep.worstRisk, m.risk);
    if (m.j == 0) rep.baseRisk = m.risk;
  }
  return rep;
}

inline json to_json(const LowerBoundReport& r) {
  json members = json::array();
  for (const auto& m : r.members)
    members.push_back({{"j", m.j}, {"center", m.center}, {"risk", m.risk}, {"bandwidth", m.bandwidth}, {"error", m.error}});
  return json{{"version", kVersion},
              {"hypotheses", to_json(r.set)},
              {"members", std::move(members)},
              {"worstRisk", r.worstRisk},
              {"baseRisk", r.baseRisk}};
}

}  // namespace dlest
