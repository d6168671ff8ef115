#pragma once

//! Euler-Maruyama paths of dX = b(X)dt + dW with seed provenance.

#include <dlest/model.hpp>
#include <dlest/rng.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <vector>

namespace dlest {

enum class InitKind { Stationary, Fixed, BurnIn };

struct SimConfig {
  double horizon = 1000.0;
  double step = 0.01;
  InitKind init = InitKind::Stationary;
  double x0 = 0.0;       ///< start for Fixed and BurnIn
  double burnIn = 0.0;   ///< BurnIn duration; 0 selects 10 / classGamma
  double noiseScale = 1.0;  ///< test hook: 0 turns the recursion deterministic
  double maxStep = 1e-2;    ///< default ceiling on step

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(horizon / step)); }

  void validate() const {
    if (!(horizon > 0.0) || !(step > 0.0)) fail(ErrorKind::ConfigError, "horizon and step must be positive");
    if (step > horizon) fail(ErrorKind::ConfigError, "step exceeds horizon");
    if (step > maxStep) fail(ErrorKind::ConfigError, "step above the configured ceiling");
    if (horizon / step > 4e8) fail(ErrorKind::ConfigError, "path too long for memory");
  }
};

struct DiffusionPath {
  std::vector<double> values;  ///< X at t_i = i * step, i = 0..n
  std::uint64_t seed = 0;
  SimConfig config;

  double horizon() const { return config.horizon; }
  double step() const { return config.step; }
  std::size_t steps() const { return values.empty() ? 0 : values.size() - 1; }
  std::vector<double> times() const {
    std::vector<double> t(values.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) * config.step;
    return t;
  }
};

/// Inverse-CDF draw from the tabulated invariant law.
inline double sample_stationary_initial(const InvariantModel& inv, Philox& rng) { return inv.quantile(rng.uniform()); }

/// Gaussian innovations are stream 0 of the seed, the initial draw uses
/// stream 1, and burn-in noise stream 2; the noise table is therefore the
/// same for every initialization.
inline DiffusionPath simulate_path(const DriftModel& model, const InvariantModel& inv, const SimConfig& cfg,
                                   std::uint64_t seed) {
  cfg.validate();
  const double dt = cfg.step, sq = std::sqrt(dt) * cfg.noiseScale;
  const double limit = 10.0 * inv.radius();
  DiffusionPath path;
  path.seed = seed;
  path.config = cfg;
  const std::size_t n = cfg.steps();
  path.values.resize(n + 1);

  model.with_drift([&](const auto& b) {
    auto run = [&](double x, std::size_t count, Philox& noise, double* out) {
      for (std::size_t i = 0; i < count; ++i) {
        x = x + b(x) * dt + sq * noise.normal();
        if (!(std::abs(x) <= limit)) fail(ErrorKind::Blowup, "path left 10x the invariant grid radius");
        if (out) out[i] = x;
      }
      return x;
    };
    double x0 = cfg.x0;
    if (cfg.init == InitKind::Stationary) {
      Philox init(seed, 1);
      x0 = sample_stationary_initial(inv, init);
    } else if (cfg.init == InitKind::BurnIn) {
      const double dur = cfg.burnIn > 0.0 ? cfg.burnIn : 10.0 / model.classGamma;
      Philox burn(seed, 2);
      x0 = run(x0, static_cast<std::size_t>(std::llround(dur / dt)), burn, nullptr);
    }
    path.values[0] = x0;
    Philox noise(seed, 0);
    run(x0, n, noise, path.values.data() + 1);
  });
  return path;
}

/// Forward differences X_{i+1} - X_i.
inline std::vector<double> path_increments(const DiffusionPath& path) {
  std::vector<double> d(path.steps());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = path.values[i + 1] - path.values[i];
  return d;
}

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 8);
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

inline constexpr char kPathMagic[8] = {'D', 'L', 'P', 'A', 'T', 'H', '1', '\0'};

/// Binary layout: 8-byte magic "DLPATH1\0", horizon, step (f64 LE), seed
/// (u64 LE), then every value as f64 LE. The value count follows from the size.
inline void write_path_binary(std::ostream& os, const DiffusionPath& path) {
  os.write(kPathMagic, 8);
  detail::put_u64(os, std::bit_cast<std::uint64_t>(path.horizon()));
  detail::put_u64(os, std::bit_cast<std::uint64_t>(path.step()));
  detail::put_u64(os, path.seed);
  for (double v : path.values) detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) fail(ErrorKind::IoError, "failed to write path");
}

inline DiffusionPath read_path_binary(std::istream& is) {
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 32 || std::memcmp(bytes.data(), kPathMagic, 8) != 0 || (bytes.size() - 32) % 8 != 0)
    fail(ErrorKind::IoError, "not a DLPATH1 file");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  DiffusionPath path;
  path.config.horizon = std::bit_cast<double>(detail::get_u64(p + 8));
  path.config.step = std::bit_cast<double>(detail::get_u64(p + 16));
  path.seed = detail::get_u64(p + 24);
  const std::size_t n = (bytes.size() - 32) / 8;
  path.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) path.values[i] = std::bit_cast<double>(detail::get_u64(p + 32 + 8 * i));
  return path;
}

inline void write_path_csv(std::ostream& os, const DiffusionPath& path) {
  os.precision(17);
  os << "t,x\n";
  for (std::size_t i = 0; i < path.values.size(); ++i)
    os << static_cast<double>(i) * path.step() << ',' << path.values[i] << '\n';
}

}  // namespace dlest
