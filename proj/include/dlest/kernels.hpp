#pragma once

//! Symmetric Lipschitz kernels supported on [-1/2, 1/2].

#include <dlest/core.hpp>
#include <dlest/model.hpp>

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace dlest {

class Kernel {
 public:
  enum class Kind { Triangular, SmoothPolynomial, Custom };

  /// K(u) = 2 - 4|u|, order 1, unit mass.
  static Kernel triangular() {
    Kernel k;
    k.kind_ = Kind::Triangular;
    k.order_ = 1;
    k.name_ = "triangular";
    k.finish(4.0);
    return k;
  }

  /// Even polynomial in (2u)^2 times exp(-1/(1-4u^2)), coefficients fixed by
  /// unit mass and vanishing even moments up to the order.
  static Kernel smooth(int order);

  /// Arbitrary evaluator on [-1/2, 1/2], used by tests and cross-checks.
  static Kernel custom(std::string name, std::function<double(double)> f, int order) {
    Kernel k;
    k.kind_ = Kind::Custom;
    k.order_ = order;
    k.name_ = std::move(name);
    k.custom_ = std::make_shared<std::function<double(double)>>(std::move(f));
    k.finish(-1.0);
    return k;
  }

  /// Zero outside [-1/2, 1/2].
  double operator()(double u) const {
    if (!(std::abs(u) < 0.5)) return 0.0;
    switch (kind_) {
      case Kind::Triangular: return 2.0 - 4.0 * std::abs(u);
      case Kind::SmoothPolynomial: {
        const double v2 = 4.0 * u * u;
        double p = 0.0;
        for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) p = p * v2 + *it;
        return p * std::exp(-1.0 / (1.0 - v2));
      }
      case Kind::Custom: return (*custom_)(u);
    }
    return 0.0;
  }

  /// int_{-1/2}^{u} K.
  double antiderivative(double u) const {
    if (u <= -0.5) return 0.0;
    if (u >= 0.5) return mass_;
    if (kind_ == Kind::Triangular) {
      const double a = std::abs(u);
      return 0.5 + (u < 0 ? -1.0 : 1.0) * (2.0 * a - 2.0 * a * a);
    }
    return hermite(table_grid_, anti_, values_, u);
  }

  Kind kind() const { return kind_; }
  int order() const { return order_; }
  const std::string& name() const { return name_; }
  double lipschitz() const { return lipschitz_; }
  double l2norm() const { return l2norm_; }
  double mass() const { return mass_; }
  const std::vector<double>& moments() const { return moments_; }
  const std::vector<double>& coefficients() const { return coeffs_; }
  bool nonnegative() const { return nonnegative_; }

  /// int |K(v)| |v|^beta dv.
  double abs_moment(double beta) const {
    if (!(beta > 0.0)) fail(ErrorKind::DomainError, "abs_moment needs beta > 0");
    if (kind_ == Kind::Triangular) return std::pow(2.0, 1.0 - beta) / ((beta + 1.0) * (beta + 2.0));
    // Substituting v = w^2 removes the |v|^beta cusp at the origin; 4-point
    // Gauss-Legendre panels on w in [0, sqrt(1/2)].
    static constexpr double node[2] = {0.3399810435848563, 0.8611363115940526};
    static constexpr double weight[2] = {0.6521451548625461, 0.3478548451374538};
    const int panels = 4000;
    const double r = 0.5 * std::sqrt(0.5) / panels;
    double s = 0.0;
    for (int p = 0; p < panels; ++p) {
      const double m = (2 * p + 1) * r;
      for (int k = 0; k < 2; ++k)
        for (double w : {m - r * node[k], m + r * node[k]}) {
          const double v = w * w;
          s += weight[k] * 2.0 * w * std::pow(v, beta) * (std::abs((*this)(v)) + std::abs((*this)(-v)));
        }
    }
    return r * s;
  }

  void write_csv(std::ostream& os, std::size_t points = 1001) const {
    os.precision(17);
    os << "u,K\n";
    for (std::size_t i = 0; i < points; ++i) {
      const double u = -0.5 + static_cast<double>(i) / static_cast<double>(points - 1);
      os << u << ',' << (*this)(u) << '\n';
    }
  }

  /// Dense table spacing used for tabulated quantities.
  static constexpr int kTableHalf = 10000;

 private:
  void finish(double lipschitz) {
    table_grid_ = UniformGrid{0.5 / kTableHalf, -kTableHalf, 2 * kTableHalf + 1};
    values_.resize(table_grid_.size);
    for (std::size_t i = 0; i < table_grid_.size; ++i) values_[i] = (*this)(table_grid_.at(i));
    const double h = table_grid_.step;
    mass_ = quad::trapezoid(values_, h);
    anti_ = quad::cumulative_trapezoid(values_, h);
    std::vector<double> sq(values_.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = values_[i] * values_[i];
    l2norm_ = std::sqrt(quad::trapezoid(sq, h));
    moments_.assign(static_cast<std::size_t>(order_) + 2, 0.0);
    std::vector<double> mk(values_.size());
    for (std::size_t k = 0; k < moments_.size(); ++k) {
      for (std::size_t i = 0; i < mk.size(); ++i) mk[i] = std::pow(table_grid_.at(i), static_cast<double>(k)) * values_[i];
      moments_[k] = quad::trapezoid(mk, h);
    }
    if (kind_ == Kind::Triangular) {
      mass_ = 1.0;
      l2norm_ = 2.0 / std::sqrt(3.0);
      moments_[0] = 1.0;
      moments_[1] = 0.0;
      moments_[2] = 1.0 / 24.0;
    }
    nonnegative_ = true;
    for (double v : values_) nonnegative_ = nonnegative_ && v >= 0.0;
    if (lipschitz > 0.0) {
      lipschitz_ = lipschitz;
    } else {
      double m = 0.0;
      for (std::size_t i = 1; i < values_.size(); ++i) m = std::max(m, std::abs(values_[i] - values_[i - 1]) / h);
      lipschitz_ = m * (1.0 + 1e-3);
    }
  }

  Kind kind_ = Kind::Triangular;
  int order_ = 1;
  std::string name_;
  std::vector<double> coeffs_;
  std::shared_ptr<std::function<double(double)>> custom_;
  UniformGrid table_grid_;
  std::vector<double> values_, anti_, moments_;
  double mass_ = 1.0, l2norm_ = 0.0, lipschitz_ = 0.0;
  bool nonnegative_ = true;
};

inline Kernel Kernel::smooth(int order) {
  if (order < 1) fail(ErrorKind::DomainError, "kernel order must be >= 1");
  const int m = order / 2 + 1;  // unknowns: coefficients of (2u)^{2j}, j < m
  // Moments of the bump in v = 2u: int v^{2k} phi(v/2) du.
  const int half = 20000;
  const double h = 0.5 / half;
  std::vector<double> mom(2 * m - 1, 0.0);
  std::vector<double> f(2 * half + 1);
  for (int k = 0; k < 2 * m - 1; ++k) {
    for (int i = 0; i <= 2 * half; ++i) {
      const double u = (i - half) * h;
      f[i] = std::pow(2.0 * u, 2 * k) * smooth_bump(u);
    }
    mom[k] = quad::trapezoid(f, h);
  }
  Eigen::MatrixXd A(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) A(r, c) = mom[r + c];
  rhs(0) = 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  const double rc = lu.rcond();
  if (!(rc > 1e-12)) fail(ErrorKind::SingularMomentSystem, "moment matrix condition number above 1e12");
  const Eigen::VectorXd sol = lu.solve(rhs);

  Kernel k;
  k.kind_ = Kind::SmoothPolynomial;
  k.order_ = order;
  k.name_ = "smooth-order-" + std::to_string(order);
  k.coeffs_.assign(sol.data(), sol.data() + m);
  k.finish(-1.0);
  return k;
}

/// Order <= 1 gives the triangular kernel, higher orders the smooth family.
inline Kernel make_kernel(int order) {
  if (order < 1) fail(ErrorKind::DomainError, "kernel order must be >= 1");
  return order == 1 ? Kernel::triangular() : Kernel::smooth(order);
}

/// Parses "triangular" or "smooth-order-N".
inline Kernel kernel_by_name(const std::string& name) {
  if (name == "triangular") return Kernel::triangular();
  const std::string prefix = "smooth-order-";
  if (name.rfind(prefix, 0) == 0) {
    try {
      return Kernel::smooth(std::stoi(name.substr(prefix.size())));
    } catch (const std::invalid_argument&) {
    }
  }
  fail(ErrorKind::ConfigError, "unknown kernel name: " + name);
}

struct KernelReport {
  bool orderOk = false;
  bool alphaOk = false;
  bool supportOk = false;
  bool symmetric = false;
  bool momentsOk = false;
  bool lipschitzOk = false;
  bool nonnegative = false;
  bool nonnegativityWaived = false;  ///< signed kernels are accepted from order 2 on
  bool passed = false;
};

/// Order uses the strict floor of alpha, matching the Holder convention.
inline KernelReport validate_kernel(const Kernel& K, double alpha, const HolderSpec& spec) {
  KernelReport r;
  r.orderOk = K.order() >= strict_floor(alpha);
  r.alphaOk = alpha >= spec.beta + 1.0;
  r.supportOk = K(0.5 + 1e-9) == 0.0 && K(-0.5 - 1e-9) == 0.0 && K(0.75) == 0.0 && K(-3.0) == 0.0;
  r.symmetric = true;
  r.lipschitzOk = true;
  const int probes = 2001;
  double prev_u = -0.5, prev_k = K(-0.5);
  for (int i = 0; i < probes; ++i) {
    const double u = -0.5 + static_cast<double>(i) / (probes - 1);
    const double ku = K(u);
    r.symmetric = r.symmetric && std::abs(ku - K(-u)) <= 1e-12;
    if (i > 0) r.lipschitzOk = r.lipschitzOk && std::abs(ku - prev_k) <= K.lipschitz() * std::abs(u - prev_u) + 1e-15;
    prev_u = u;
    prev_k = ku;
  }
  const auto& m = K.moments();
  r.momentsOk = std::abs(m[0] - 1.0) <= 1e-10;
  for (int k = 1; k <= K.order() && k < static_cast<int>(m.size()); ++k)
    r.momentsOk = r.momentsOk && std::abs(m[static_cast<std::size_t>(k)]) <= 1e-8;
  r.nonnegative = K.nonnegative();
  r.nonnegativityWaived = !r.nonnegative && K.order() >= 2;
  r.passed = r.orderOk && r.alphaOk && r.supportOk && r.symmetric && r.momentsOk && r.lipschitzOk &&
             (r.nonnegative || r.nonnegativityWaived);
  return r;
}

inline double abs_moment(const Kernel& K, double beta) { return K.abs_moment(beta); }

}  // namespace dlest
