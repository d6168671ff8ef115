#pragma once

//! Command-line front end: one subcommand per pipeline stage.

#include <dlest/harness.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace dlest::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr std::string_view kSchemaHelp = R"(Config schema (JSON):
  model:        {family: ou|tanh|polynomial|bump|tabulated, gamma | kappa,lambda,shift | coeffs |
                 base,center,width,amplitude,qScale | x0,dx,values, classC, classA, classGamma,
                 holder: {beta, L}}
  grid:         {radius, spacing}
  kernel:       triangular | smooth-order-N
  tGrid:        increasing horizons (required)
  step, replications, masterSeed, eta, oracleM
  init:         "stationary" | {fixed: x0} | {burnIn: duration}
  occupation:   left_point | linear_interpolation | brownian_bridge
  calibration:  {mode: theoretical|override|calibrated, bdg, cTilde2, entropyV, etaBar1, etaBar2, C, factor}
  bounds:       {cHat, cHat0, nu1, nu2, nu3, etaBar1, etaBar2}
  targets:      [density_risk, derivative_risk, drift_risk, oracle_risk, simultaneous,
                 efficiency, donsker, lowerbound_corpus]
  window:       {lo, hi}
  efficiency:   {points: [x...]}
  lowerbound:   {v, t}
  keepTraces:   bool
)";

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  unsigned threads = 0;
  std::string format = "json";
  std::string pathFile;
  double bandwidth = 0.0;
};

namespace detail {

inline std::filesystem::path prepare(const Options& o) {
  std::filesystem::path dir(o.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create output directory " + o.out);
  return dir;
}

inline ExperimentConfig load(const Options& o) {
  if (o.config.empty()) fail(ErrorKind::ConfigError, "--config is required");
  auto c = load_config(o.config);
  if (o.seed) c.masterSeed = *o.seed;
  if (c.tGrid.empty()) fail(ErrorKind::ConfigError, "tGrid must name at least one horizon");
  return c;
}

inline void manifest(const std::filesystem::path& dir, const ExperimentConfig& c, std::string_view cmd) {
  write_text((dir / "manifest.json").string(), make_manifest(c, cmd).dump(2) + "\n");
}

inline void write_estimate(const std::filesystem::path& dir, const std::string& stem, const FunctionEstimate& e,
                           const std::string& format) {
  if (format == "csv") {
    std::ostringstream os;
    e.write_csv(os);
    write_text((dir / (stem + ".csv")).string(), os.str());
  } else {
    write_text((dir / (stem + ".json")).string(), to_json(e).dump(2) + "\n");
  }
}

inline DiffusionPath obtain_path(const Options& o, const ExperimentContext& ctx) {
  if (!o.pathFile.empty()) {
    std::ifstream in(o.pathFile, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot open path file " + o.pathFile);
    return read_path_binary(in);
  }
  const double t = ctx.config.tGrid.front();
  return simulate_path(ctx.model, ctx.inv, ctx.sim_config(t), derive_seed(ctx.config.masterSeed, 0, 0));
}

}  // namespace detail

inline void cmd_simulate(const Options& o) {
  const auto c = detail::load(o);
  const auto dir = detail::prepare(o);
  const ExperimentContext ctx(c);
  const auto path = detail::obtain_path(Options{o.config, o.seed, o.out, o.threads, o.format, {}, 0.0}, ctx);
  {
    std::ofstream bin(dir / "path.bin", std::ios::binary);
    write_path_binary(bin, path);
  }
  if (o.format == "csv") {
    std::ostringstream os;
    write_path_csv(os, path);
    write_text((dir / "path.csv").string(), os.str());
  }
  std::ostringstream inv;
  ctx.inv.write_csv(inv);
  write_text((dir / "invariant.csv").string(), inv.str());
  detail::manifest(dir, c, "simulate");
}

inline void cmd_estimate(const Options& o) {
  const auto c = detail::load(o);
  const auto dir = detail::prepare(o);
  const ExperimentContext ctx(c);
  const auto path = detail::obtain_path(o, ctx);
  const double t = path.horizon();
  const double h = o.bandwidth > 0.0 ? o.bandwidth : 1.0 / std::sqrt(t);
  const auto w = ctx.window(h);
  const auto rho = density_kde(path, ctx.kernel, h, w, c.occupation);
  const auto der = derivative_estimator(path, ctx.kernel, h, w);
  const auto ref = density_kde(path, ctx.kernel, 1.0 / std::sqrt(t), w, c.occupation);
  detail::write_estimate(dir, "density", rho, o.format);
  detail::write_estimate(dir, "derivative", der, o.format);
  detail::write_estimate(dir, "drift", drift_estimator(der, ref, t), o.format);
  detail::write_estimate(dir, "local_time", local_time_estimator(path, w, default_local_time_eps(path.step())),
                         o.format);
  detail::manifest(dir, c, "estimate");
}

inline void cmd_select(const Options& o) {
  const auto c = detail::load(o);
  const auto dir = detail::prepare(o);
  const ExperimentContext ctx(c);
  const auto path = detail::obtain_path(o, ctx);
  const auto grid = build_grid(path.horizon(), c.eta);
  const auto w = ctx.window(grid.hMin());
  const auto fam = compute_family(path, ctx.kernel, grid, w, true, c.occupation);
  json j;
  j["bandwidths"] = grid.bandwidths;
  j["calibration"] = to_json(c.calibration);
  j["single"] = to_json(select_from_family(fam, c.calibration, Scheme::Single));
  j["simultaneous"] = to_json(select_from_family(fam, c.calibration, Scheme::Simultaneous));
  write_text((dir / "selection.json").string(), j.dump(2) + "\n");
  detail::manifest(dir, c, "select");
}

inline void cmd_mc(const Options& o) {
  const auto c = detail::load(o);
  const auto dir = detail::prepare(o);
  const auto rep = run_mc_risk(c, o.threads);
  write_text((dir / "report.json").string(), to_json(rep).dump(2) + "\n");
  write_text((dir / "risks.csv").string(), risk_table_csv(rep));
  write_text((dir / "replications.csv").string(), replication_csv(rep));
  if (c.keepTraces) {
    json tr = json::array();
    for (std::size_t ti = 0; ti < rep.singleTraces.size(); ++ti) {
      json row{{"t", rep.tGrid[ti]}, {"single", json::array()}, {"simultaneous", json::array()}};
      for (const auto& s : rep.singleTraces[ti]) row["single"].push_back(to_json(s));
      for (const auto& s : rep.simultaneousTraces[ti]) row["simultaneous"].push_back(to_json(s));
      tr.push_back(std::move(row));
    }
    write_text((dir / "traces.json").string(), tr.dump() + "\n");
  }
  detail::manifest(dir, c, "mc");
}

inline void cmd_efficiency(const Options& o) {
  const auto c = detail::load(o);
  const auto dir = detail::prepare(o);
  const auto rep = run_efficiency_study(c, o.threads);
  write_text((dir / "efficiency.json").string(), to_json(rep).dump(2) + "\n");
  std::ostringstream os;
  os.precision(17);
  os << "x,rho,mcVariance,crValue,ratio,ksPValue\n";
  for (const auto& p : rep.points)
    os << p.x << ',' << p.rho << ',' << p.mcVariance << ',' << p.crValue << ',' << p.ratio << ','
       << (p.ks ? p.ks->pValue : std::numeric_limits<double>::quiet_NaN()) << '\n';
  write_text((dir / "efficiency.csv").string(), os.str());
  detail::manifest(dir, c, "efficiency");
}

inline void cmd_lowerbound(const Options& o) {
  const auto c = detail::load(o);
  const auto dir = detail::prepare(o);
  const auto rep = run_lowerbound_corpus(c, (dir / "corpus").string(), o.threads);
  write_text((dir / "lowerbound.json").string(), to_json(rep).dump(2) + "\n");
  detail::manifest(dir, c, "lowerbound");
}

inline void cmd_bounds(const Options& o) {
  const auto c = detail::load(o);
  const auto dir = detail::prepare(o);
  const ExperimentContext ctx(c);
  if (!ctx.model.holder) fail(ErrorKind::ConfigError, "bounds needs model.holder");
  const double rhoSup = ctx.inv.sup_density();
  json rows = json::array();
  std::ostringstream os;
  os.precision(17);
  os << "t,h,u,phi,psi_stochastic,psi_mixing,psi_bias,psi_bar,in_regime\n";
  for (double t : c.tGrid)
    for (double h : build_grid(t, c.eta).bandwidths)
      for (double u : {1.0, 2.0, 4.0, 8.0}) {
        const double phi = phi_bound(t, h, u, c.bounds);
        const auto psi = psi_bound(t, h, u, *ctx.model.holder, ctx.kernel, c.bounds);
        const auto bar = psi_bar_bound(t, h, u, rhoSup, c.bounds);
        rows.push_back({{"t", t}, {"h", h}, {"u", u}, {"phi", phi}, {"psiStochastic", psi.stochastic},
                        {"psiMixing", psi.mixing}, {"psiBias", psi.bias}, {"psiBar", bar.value},
                        {"inRegime", bar.inRegime}});
        os << t << ',' << h << ',' << u << ',' << phi << ',' << psi.stochastic << ',' << psi.mixing << ','
           << psi.bias << ',' << bar.value << ',' << (bar.inRegime ? 1 : 0) << '\n';
      }
  if (o.format == "csv") write_text((dir / "bounds.csv").string(), os.str());
  else write_text((dir / "bounds.json").string(), rows.dump(2) + "\n");
  detail::manifest(dir, c, "bounds");
}

/// Exit 0 on success, 1 on usage or validation errors, 2 on runtime failures.
inline int cli_main(int argc, char** argv) {
  CLI::App app{"dlest: invariant density, derivative and drift estimation for scalar diffusions"};
  app.footer(std::string(kSchemaHelp));
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "JSON experiment config");
  app.add_option("--seed", o.seed, "master seed (overrides the config)");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--threads", o.threads, "worker threads (0 = all cores)");
  app.add_option("--format", o.format, "output format")->check(CLI::IsMember({"json", "csv"}));

  std::function<void(const Options&)> action;
  auto sub = [&](const char* name, const char* help, void (*fn)(const Options&)) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    s->callback([&action, fn] { action = fn; });
    return s;
  };
  sub("simulate", "simulate one path (path.bin, optional path.csv)", cmd_simulate);
  sub("estimate", "density, derivative, drift and local-time estimates", cmd_estimate)
      ->add_option("--path", o.pathFile, "read the path from a DLPATH1 file instead of simulating");
  app.get_subcommand("estimate")->add_option("--bandwidth", o.bandwidth, "bandwidth (default t^{-1/2})");
  sub("select", "single and simultaneous bandwidth selection traces", cmd_select)
      ->add_option("--path", o.pathFile, "read the path from a DLPATH1 file instead of simulating");
  sub("mc", "Monte Carlo risk report", cmd_mc);
  sub("efficiency", "efficiency study against the Cramer-Rao variance", cmd_efficiency);
  sub("lowerbound", "lower-bound hypothesis corpus", cmd_lowerbound);
  sub("bounds", "tables of the concentration bound functions", cmd_bounds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return kExitOk;
    std::cerr << kSchemaHelp;
    return kExitValidation;
  }
  try {
    action(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_validation() ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace dlest::cli
