#pragma once

//! JSON configuration schema and serializers.
//!
//! Config keys (all optional unless noted):
//!   model: {family: "ou"|"tanh"|"polynomial"|"bump"|"tabulated", ...family
//!           parameters, classC, classA, classGamma, holder: {beta, L}}
//!   grid: {radius, spacing}            invariant-density tabulation
//!   kernel: "triangular" | "smooth-order-N"
//!   tGrid: [t...] (required), step, replications, masterSeed, eta
//!   init: "stationary" | {fixed: x0} | {burnIn: duration}
//!   occupation: "left_point" | "linear_interpolation" | "brownian_bridge"
//!   calibration: {mode: "theoretical"|"override"|"calibrated", bdg, cTilde2,
//!                 entropyV, etaBar1, etaBar2, C, factor}
//!   bounds: {cHat, cHat0, nu1, nu2, nu3, etaBar1, etaBar2}
//!   targets: subset of density_risk, derivative_risk, drift_risk, oracle_risk,
//!            simultaneous, efficiency, donsker, lowerbound_corpus
//!   window: {lo, hi}                   evaluation window (default [-A-2, A+2])
//!   oracleM: M used by the oracle bandwidth (default 1)
//!   efficiency: {points: [x...], horizon}
//!   lowerbound: {v, t}
//!   keepTraces: bool                   store selection traces per replication
//!   testHooks: {truthAsEstimate: bool}  bypass estimation (risks become 0)
//!   output: directory

#include <dlest/asymptotics.hpp>
#include <dlest/estimators.hpp>
#include <dlest/lepski.hpp>
#include <dlest/model.hpp>

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace dlest {

using json = nlohmann::ordered_json;

enum class Target { DensityRisk, DerivativeRisk, DriftRisk, OracleRisk, Simultaneous, Efficiency, Donsker, LowerBoundCorpus };

inline std::string_view to_string(Target t) {
  switch (t) {
    case Target::DensityRisk: return "density_risk";
    case Target::DerivativeRisk: return "derivative_risk";
    case Target::DriftRisk: return "drift_risk";
    case Target::OracleRisk: return "oracle_risk";
    case Target::Simultaneous: return "simultaneous";
    case Target::Efficiency: return "efficiency";
    case Target::Donsker: return "donsker";
    case Target::LowerBoundCorpus: return "lowerbound_corpus";
  }
  return "unknown";
}

inline Target target_from_string(const std::string& s) {
  for (auto t : {Target::DensityRisk, Target::DerivativeRisk, Target::DriftRisk, Target::OracleRisk,
                 Target::Simultaneous, Target::Efficiency, Target::Donsker, Target::LowerBoundCorpus})
    if (to_string(t) == s) return t;
  fail(ErrorKind::ConfigError, "unknown target: " + s);
}

struct ExperimentConfig {
  json modelSpec = json{{"family", "ou"}, {"gamma", 1.0}};
  GridSpec gridSpec;
  std::string kernelName = "triangular";
  std::vector<double> tGrid;
  double step = 0.01;
  std::size_t replications = 2;
  std::uint64_t masterSeed = 1;
  double eta = 1.25;
  InitKind init = InitKind::Stationary;
  double initValue = 0.0;
  OccupationRule occupation = OccupationRule::LeftPoint;
  CalibrationConstants calibration;
  BoundConstants bounds;
  std::set<Target> targets;
  std::optional<std::pair<double, double>> window;
  double oracleM = 1.0;
  std::vector<double> efficiencyPoints{0.0, 0.5};
  double lowerboundV = 0.5;
  double lowerboundT = 2000.0;
  bool keepTraces = false;
  bool truthAsEstimate = false;  ///< test hook: every estimate is replaced by the truth
  std::string output = "out";
  json raw;  ///< the parsed document, used for hashing

  bool has(Target t) const { return targets.count(t) > 0; }

  void validate() const {
    if (replications < 2) fail(ErrorKind::ConfigError, "replications must be >= 2");
    for (std::size_t i = 0; i < tGrid.size(); ++i) {
      if (!(tGrid[i] > 8.0)) fail(ErrorKind::ConfigError, "horizons must exceed 8");
      if (i > 0 && !(tGrid[i] > tGrid[i - 1])) fail(ErrorKind::ConfigError, "tGrid must be increasing");
    }
    if (!(step > 0.0)) fail(ErrorKind::ConfigError, "step must be positive");
    if (!(eta > 1.0)) fail(ErrorKind::ConfigError, "eta must exceed 1");
    calibration.validate();
    bounds.validate();
  }
};

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// Builds a drift model from its JSON description.
inline DriftModel parse_model(const json& j) {
  if (!j.is_object()) fail(ErrorKind::ConfigError, "model must be an object");
  DriftModel m;
  m.classC = detail::get_or(j, "classC", 4.0);
  m.classA = detail::get_or(j, "classA", 1.0);
  m.classGamma = detail::get_or(j, "classGamma", 0.5);
  if (j.contains("holder"))
    m.holder = HolderSpec{detail::get_or(j["holder"], "beta", 1.0), detail::get_or(j["holder"], "L", 5.0)};
  const auto family = detail::get_or<std::string>(j, "family", "ou");
  if (family == "ou") {
    m.family = OrnsteinUhlenbeck{detail::get_or(j, "gamma", 1.0)};
  } else if (family == "tanh") {
    m.family = TanhShift{detail::get_or(j, "kappa", 1.0), detail::get_or(j, "lambda", 1.0), detail::get_or(j, "shift", 0.0)};
  } else if (family == "polynomial") {
    m.family = Polynomial{detail::get_or(j, "coeffs", std::vector<double>{})};
  } else if (family == "tabulated") {
    const double x0 = detail::get_or(j, "x0", 0.0), dx = detail::get_or(j, "dx", 0.0);
    const auto values = detail::get_or(j, "values", std::vector<double>{});
    if (!(dx > 0.0) || values.size() < 2) fail(ErrorKind::ConfigError, "tabulated drift needs dx > 0 and values");
    const auto first = static_cast<std::int64_t>(std::llround(x0 / dx));
    m.family = TabulatedDrift{Tabulated{UniformGrid{dx, first, values.size()}, values}};
  } else if (family == "bump") {
    if (!j.contains("base")) fail(ErrorKind::ConfigError, "bump model needs a base model");
    auto base = std::make_shared<const DriftModel>(parse_model(j["base"]));
    auto inv = std::make_shared<const InvariantModel>(build_invariant(*base));
    BumpSpec b{detail::get_or(j, "center", 0.0), detail::get_or(j, "width", 0.1), detail::get_or(j, "amplitude", 0.0),
               detail::get_or(j, "qScale", 1.0)};
    m.family = BumpPerturbed{base, inv, b};
  } else {
    fail(ErrorKind::ConfigError, "unknown model family: " + family);
  }
  m.validate();
  return m;
}

inline CalibrationConstants parse_calibration(const json& j, double kernelL2) {
  CalibrationConstants c;
  c.kernelL2 = kernelL2;
  if (!j.is_object()) return c;
  c.bdg = detail::get_or(j, "bdg", c.bdg);
  c.cTilde2 = detail::get_or(j, "cTilde2", c.cTilde2);
  c.entropyV = detail::get_or(j, "entropyV", c.entropyV);
  c.kernelL2 = detail::get_or(j, "kernelL2", c.kernelL2);
  const auto mode = detail::get_or<std::string>(j, "mode", "theoretical");
  if (mode == "theoretical") {
    c.mode = CalibrationConstants::Mode::Theoretical;
  } else if (mode == "override") {
    c.mode = CalibrationConstants::Mode::Override;
    c.etaBar1Override = detail::get_or(j, "etaBar1", 1.0);
    c.etaBar2Override = detail::get_or(j, "etaBar2", 1.0);
    c.cOverride = detail::get_or(j, "C", 1.0);
  } else if (mode == "calibrated") {
    c.mode = CalibrationConstants::Mode::Calibrated;
    c.factor = detail::get_or(j, "factor", 1.0);
  } else {
    fail(ErrorKind::ConfigError, "unknown calibration mode: " + mode);
  }
  return c;
}

inline json to_json(const CalibrationConstants& c) {
  json j;
  j["mode"] = c.mode == CalibrationConstants::Mode::Theoretical ? "theoretical"
              : c.mode == CalibrationConstants::Mode::Override  ? "override"
                                                                 : "calibrated";
  j["bdg"] = c.bdg;
  j["cTilde2"] = c.cTilde2;
  j["entropyV"] = c.entropyV;
  j["kernelL2"] = c.kernelL2;
  j["etaBar1"] = c.etaBar1();
  j["etaBar2"] = c.etaBar2();
  j["C"] = c.C();
  if (c.mode == CalibrationConstants::Mode::Calibrated) j["factor"] = c.factor;
  return j;
}

inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) fail(ErrorKind::ConfigError, "config root must be an object");
  ExperimentConfig c;
  c.raw = j;
  if (j.contains("model")) c.modelSpec = j["model"];
  if (j.contains("grid")) {
    c.gridSpec.radius = detail::get_or(j["grid"], "radius", 0.0);
    c.gridSpec.spacing = detail::get_or(j["grid"], "spacing", 1e-3);
  }
  c.kernelName = detail::get_or<std::string>(j, "kernel", c.kernelName);
  c.tGrid = detail::get_or(j, "tGrid", std::vector<double>{});
  c.step = detail::get_or(j, "step", c.step);
  c.replications = detail::get_or<std::size_t>(j, "replications", c.replications);
  c.masterSeed = detail::get_or<std::uint64_t>(j, "masterSeed", c.masterSeed);
  c.eta = detail::get_or(j, "eta", c.eta);
  if (j.contains("init")) {
    const auto& in = j["init"];
    if (in.is_string() && in.get<std::string>() == "stationary") {
      c.init = InitKind::Stationary;
    } else if (in.is_object() && in.contains("fixed")) {
      c.init = InitKind::Fixed;
      c.initValue = detail::get_or(in, "fixed", 0.0);
    } else if (in.is_object() && in.contains("burnIn")) {
      c.init = InitKind::BurnIn;
      c.initValue = detail::get_or(in, "burnIn", 0.0);
    } else {
      fail(ErrorKind::ConfigError, "init must be \"stationary\", {fixed: x0} or {burnIn: duration}");
    }
  }
  const auto occ = detail::get_or<std::string>(j, "occupation", "left_point");
  if (occ == "left_point") c.occupation = OccupationRule::LeftPoint;
  else if (occ == "linear_interpolation") c.occupation = OccupationRule::LinearInterpolation;
  else if (occ == "brownian_bridge") c.occupation = OccupationRule::BrownianBridge;
  else fail(ErrorKind::ConfigError, "unknown occupation rule: " + occ);
  c.calibration = parse_calibration(j.contains("calibration") ? j["calibration"] : json{},
                                    kernel_by_name(c.kernelName).l2norm());
  if (j.contains("bounds")) {
    const auto& b = j["bounds"];
    c.bounds = BoundConstants{detail::get_or(b, "cHat", 1.0), detail::get_or(b, "cHat0", 1.0),
                              detail::get_or(b, "nu1", 1.0),  detail::get_or(b, "nu2", 1.0),
                              detail::get_or(b, "nu3", 1.0),  detail::get_or(b, "etaBar1", 1.0),
                              detail::get_or(b, "etaBar2", 1.0)};
  }
  for (const auto& name : detail::get_or(j, "targets", std::vector<std::string>{})) c.targets.insert(target_from_string(name));
  if (j.contains("window"))
    c.window = std::make_pair(detail::get_or(j["window"], "lo", -3.0), detail::get_or(j["window"], "hi", 3.0));
  c.oracleM = detail::get_or(j, "oracleM", c.oracleM);
  if (j.contains("efficiency")) c.efficiencyPoints = detail::get_or(j["efficiency"], "points", c.efficiencyPoints);
  if (j.contains("lowerbound")) {
    c.lowerboundV = detail::get_or(j["lowerbound"], "v", c.lowerboundV);
    c.lowerboundT = detail::get_or(j["lowerbound"], "t", c.lowerboundT);
  }
  c.keepTraces = detail::get_or(j, "keepTraces", c.keepTraces);
  if (j.contains("testHooks")) c.truthAsEstimate = detail::get_or(j["testHooks"], "truthAsEstimate", false);
  c.output = detail::get_or<std::string>(j, "output", c.output);
  c.validate();
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot open config file: " + path);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

/// FNV-1a 64-bit hash of a byte string.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

/// Hash of the compact serialization of the parsed config document.
inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(c.raw.dump())); }

inline json to_json(const UniformGrid& g) {
  return json{{"step", g.step}, {"first", g.first}, {"size", g.size}, {"lo", g.front()}, {"hi", g.back()}};
}

inline json to_json(const FunctionEstimate& e) {
  json j;
  j["tag"] = std::string(to_string(e.tag));
  j["bandwidth"] = e.bandwidth;
  j["horizon"] = e.horizon;
  j["grid"] = to_json(e.grid);
  j["x"] = e.grid.nodes();
  j["values"] = e.values;
  return j;
}

inline json to_json(const SelectionTrace& tr) {
  json j;
  j["scheme"] = tr.scheme == Scheme::Single ? "single" : "simultaneous";
  j["horizon"] = tr.horizon;
  j["M"] = tr.M;
  j["thresholdRoot"] = tr.thresholdRoot;
  j["chosen"] = tr.chosen;
  json pairs = json::array();
  for (const auto& r : tr.perPair)
    pairs.push_back({{"h", r.h}, {"g", r.g}, {"statistic", r.statistic}, {"threshold", r.threshold}, {"passed", r.passed}});
  j["perPair"] = std::move(pairs);
  if (tr.densityConstraint) {
    json rows = json::array();
    for (const auto& r : *tr.densityConstraint)
      rows.push_back({{"h", r.h}, {"statistic", r.statistic}, {"threshold", r.threshold}, {"passed", r.passed}});
    j["densityConstraint"] = std::move(rows);
  }
  return j;
}

inline json to_json(const HypothesisSet& s) {
  json j;
  j["v"] = s.v;
  j["t"] = s.t;
  j["h_t"] = s.ht;
  j["beta"] = s.spec.beta;
  j["L"] = s.spec.L;
  j["qScale"] = s.qScale;
  j["class"] = {{"C", s.params.C}, {"A", s.params.A}, {"gamma", s.params.gamma}};
  json centers = json::array();
  for (const auto& m : s.members) centers.push_back({{"j", m.j}, {"center", m.center}});
  j["centers"] = std::move(centers);
  const auto& v = s.validation;
  j["validation"] = {{"positivity", v.positivity},         {"mass", v.mass},
                     {"holder", v.holder},                 {"sigma", v.sigma},
                     {"disjoint", v.disjoint},             {"separation", v.separation},
                     {"cStar", v.cStar},                   {"minSeparation", v.minSeparation},
                     {"requiredSeparation", v.requiredSeparation}, {"worstMassError", v.worstMassError},
                     {"worstHolderSeminorm", v.worstHolder}, {"passed", v.passed()}};
  return j;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::IoError, "failed writing " + path);
}

}  // namespace dlest
