#pragma once

/**
 * @file catalog.hpp
 * @brief Worked systems: twisted pendula, twisted oscillators, the
 * four-body Calogero system and the two E^3 metric families.
 */

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsep/expr.hpp"
#include "bsep/model.hpp"
#include "bsep/sampling.hpp"
#include "bsep/tensor.hpp"
#include "bsep/transform.hpp"

namespace bsep {

/// Hamiltonian and integrals of a system in its original (Cartesian)
/// chart, together with the transform into the separated chart.
struct CartesianReference {
  std::vector<std::string> names;
  PhaseScalar hamiltonian;
  /// integrals[a] corresponds to the separated system's K_a (index 0 unused).
  std::vector<PhaseScalar> integrals;
  std::vector<TensorField2> killing;  // k_1, k_2, ... as contravariant fields
  ScalarField potential;
  CanonicalTransform transform;
};

/// Closed-form orbit, t -> (q, p).
using ClosedForm = std::function<PhasePoint(const PhasePoint& start, double t)>;

struct CatalogEntry {
  std::string name;
  std::shared_ptr<const TwistedSystem> system;
  PhasePoint initial;
  double t_end = 10.0;
  Box box;              // sampling box for the separated chart
  Acceptor acceptable;  // singular-set exclusion, empty when none
  std::string singular_sets;
  std::optional<CartesianReference> cartesian;
  ClosedForm closed_form;

  std::vector<Point> sample(std::size_t count, std::uint64_t seed = kDefaultSeed) const {
    return sample_box(box, count, seed, acceptable);
  }

  /// Positions from sample(), momenta uniform in [-1, 1] from a second stream.
  std::vector<PhasePoint> sample_phase(std::size_t count, std::uint64_t seed = kDefaultSeed) const {
    auto qs = sample(count, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<PhasePoint> out;
    out.reserve(qs.size());
    for (auto& q : qs) {
      PhasePoint x;
      for (std::size_t i = 0; i < q.size(); ++i) x.p.push_back(u(rng));
      x.q = std::move(q);
      out.push_back(std::move(x));
    }
    return out;
  }
};

// --- twisted pendula ----------------------------------------------------------

inline CatalogEntry pendula() {
  CatalogEntry e;
  e.name = "pendula";
  auto s = StackelMatrix::from_strings({{"2", "1+q1", "2*q1^2+2"}, {"3", "q2", "q2^3+2"}, {"4", "q3", "q3^2+1"}});
  std::vector<NaturalBlock> blocks{NaturalBlock::from_strings({{"1"}}, "-0.5*cos(q1)"),
                                   NaturalBlock::from_strings({{"1"}}, "-0.5*cos(q2)"),
                                   NaturalBlock::from_strings({{"1"}}, "0")};
  // det S > 0.67 on this box; it goes negative around |q| = 0.4.
  e.box = {{-0.3, -0.3, -0.3}, {0.3, 0.3, 0.3}};
  ProbeSpec probes{{{0, 0, 0}}, e.box, 20, kDefaultSeed};
  e.system = std::make_shared<const TwistedSystem>(
      build_system(BlockStructure({1, 1, 1}), std::move(s), std::move(blocks), probes, std::nullopt));
  e.initial = {{0.2, -0.2, 0.0}, {0.0, 0.0, 0.0}};
  e.t_end = 20.0;
  e.singular_sets = "det S = 0 (det S = 5 + 5 q1 - 6 q2 + 2 q3 + ... near the origin)";
  return e;
}

// --- constant-twist oscillators ------------------------------------------------

/// Block r is H_r = (p^2 + omega_r^2 q^2)/2. S has first row
/// (1/a1, -a2/a1, ..., -an/a1) and identity rows below, so the first row of
/// S^{-1} is exactly alpha.
inline CatalogEntry oscillators(const std::vector<double>& omega, const std::vector<double>& alpha) {
  const std::size_t n = omega.size();
  if (n == 0 || alpha.size() != n) throw std::invalid_argument("oscillators: omega and alpha must have equal nonzero length");
  for (std::size_t i = 0; i < n; ++i)
    if (!(alpha[i] > 0.0))
      throw std::invalid_argument("oscillators: alpha_" + std::to_string(i + 1) + " = " +
                                  detail::format_number(alpha[i]) + " is not positive");
  const auto num = detail::format_number;
  std::vector<std::vector<std::string>> rows(n, std::vector<std::string>(n, "0"));
  rows[0][0] = num(1.0 / alpha[0]);
  for (std::size_t a = 1; a < n; ++a) rows[0][a] = num(-alpha[a] / alpha[0]);
  for (std::size_t r = 1; r < n; ++r) rows[r][r] = "1";
  std::vector<NaturalBlock> blocks;
  BlockStructure st(std::vector<std::size_t>(n, 1));
  for (std::size_t r = 0; r < n; ++r) {
    const std::string q = st.names()[r];
    blocks.push_back(NaturalBlock::from_strings({{"1"}}, "0.5*" + num(omega[r] * omega[r]) + "*" + q + "^2"));
  }

  CatalogEntry e;
  e.name = "oscillators";
  e.box = {std::vector<double>(n, -1.0), std::vector<double>(n, 1.0)};
  e.system = std::make_shared<const TwistedSystem>(
      build_system(st, StackelMatrix::from_strings(rows), std::move(blocks), ProbeSpec{{}, e.box, 5, kDefaultSeed},
                   std::nullopt));
  e.initial.q.assign(n, 0.0);
  e.initial.p.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    e.initial.q[i] = 0.5;
    e.initial.p[i] = 0.25 * double(i + 1);
  }
  e.t_end = 20.0;
  e.singular_sets = "none";
  e.closed_form = [omega, alpha](const PhasePoint& x0, double t) {
    PhasePoint x = x0;
    for (std::size_t i = 0; i < omega.size(); ++i) {
      const double w = omega[i];
      if (w == 0.0) {
        x.q[i] = x0.q[i] + alpha[i] * x0.p[i] * t;
        continue;
      }
      const double c1 = x0.p[i] / w;
      const double c2 = x0.q[i];
      const double th = alpha[i] * w * t;
      x.q[i] = c1 * std::sin(th) + c2 * std::cos(th);
      x.p[i] = w * (c1 * std::cos(th) - c2 * std::sin(th));
    }
    return x;
  };
  return e;
}

// --- four-body Calogero -------------------------------------------------------

namespace calogero {

/// Rows of the orthogonal matrix A with z = A x.
inline const std::array<std::array<double, 4>, 4>& rotation() {
  static const std::array<std::array<double, 4>, 4> a = [] {
    const double s2 = std::sqrt(2.0), s6 = std::sqrt(6.0), s12 = std::sqrt(12.0);
    return std::array<std::array<double, 4>, 4>{{{1 / s2, -1 / s2, 0, 0},
                                                 {1 / s6, 1 / s6, -2 / s6, 0},
                                                 {1 / s12, 1 / s12, 1 / s12, -3 / s12},
                                                 {0.5, 0.5, 0.5, 0.5}}};
  }();
  return a;
}

inline const std::vector<std::string>& cartesian_names() {
  static const std::vector<std::string> n{"x1", "x2", "x3", "x4"};
  return n;
}

inline std::string potential_string() {
  std::string v;
  for (int i = 1; i <= 4; ++i)
    for (int j = i + 1; j <= 4; ++j) {
      if (!v.empty()) v += " + ";
      v += "(x" + std::to_string(i) + " - x" + std::to_string(j) + ")^-2";
    }
  return v;
}

/// k_1 with the off-diagonal entries 1/2 (x_l^2 + x_m^2 + x_r x_s + x_l x_m - sum_{j<k} x_j x_k),
/// {l, m} the complement of {r, s}.
inline std::vector<std::vector<std::string>> k1_strings() {
  std::string all;
  for (int j = 1; j <= 4; ++j)
    for (int k = j + 1; k <= 4; ++k) all += " - x" + std::to_string(j) + "*x" + std::to_string(k);
  std::vector<std::vector<std::string>> g(4, std::vector<std::string>(4));
  for (int r = 1; r <= 4; ++r)
    for (int s = 1; s <= 4; ++s) {
      if (r == s) {
        std::string d;
        for (int j = 1; j <= 4; ++j)
          for (int k = j + 1; k <= 4; ++k) {
            if (j == r || k == r) continue;
            if (!d.empty()) d += " + ";
            d += "x" + std::to_string(j) + "*x" + std::to_string(k);
          }
        g[r - 1][s - 1] = d;
        continue;
      }
      std::vector<int> rest;
      for (int m = 1; m <= 4; ++m)
        if (m != r && m != s) rest.push_back(m);
      const std::string l = "x" + std::to_string(rest[0]), m = "x" + std::to_string(rest[1]);
      const std::string a = "x" + std::to_string(std::min(r, s)), b = "x" + std::to_string(std::max(r, s));
      g[r - 1][s - 1] = "0.5*(" + l + "^2 + " + m + "^2 + " + a + "*" + b + " + " + l + "*" + m + all + ")";
    }
  return g;
}

/// k_2 = |x|^2 I - x x^T.
inline std::vector<std::vector<std::string>> k2_strings() {
  std::vector<std::vector<std::string>> g(4, std::vector<std::string>(4));
  for (int i = 1; i <= 4; ++i)
    for (int j = 1; j <= 4; ++j) {
      if (i != j) {
        const int a = std::min(i, j), b = std::max(i, j);
        g[i - 1][j - 1] = "-x" + std::to_string(a) + "*x" + std::to_string(b);
        continue;
      }
      std::string d;
      for (int k = 1; k <= 4; ++k) {
        if (k == i) continue;
        if (!d.empty()) d += " + ";
        d += "x" + std::to_string(k) + "^2";
      }
      g[i - 1][j - 1] = d;
    }
  return g;
}

/// f(phi2, phi3) = V restricted to r = 1, phi1 = pi/2, written in the
/// separated-chart names q3, q4. The centre-of-mass row of A drops out of
/// every difference x_i - x_j.
inline std::string leaf_potential_string() {
  const auto& a = rotation();
  const auto num = detail::format_number;
  const std::array<std::string, 3> z{"sin(q3)*sin(q4)", "sin(q3)*cos(q4)", "cos(q3)"};
  std::string v;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      std::string d;
      for (int k = 0; k < 3; ++k) {
        const double c = a[k][i] - a[k][j];
        if (c == 0.0) continue;
        if (!d.empty()) d += " + ";
        d += "(" + num(c) + ")*" + z[k];
      }
      if (!v.empty()) v += " + ";
      v += "(" + d + ")^-2";
    }
  return v;
}

inline CanonicalTransform transform() {
  const auto& a = rotation();
  const auto num = detail::format_number;
  // x = A^T z
  std::vector<std::string> x_of_z(4);
  for (int i = 0; i < 4; ++i) {
    std::string s;
    for (int k = 0; k < 4; ++k) {
      if (a[k][i] == 0.0) continue;
      if (!s.empty()) s += " + ";
      s += "(" + num(a[k][i]) + ")*z" + std::to_string(k + 1);
    }
    x_of_z[i] = s;
  }
  TransformStage rotate("z = A x", x_of_z, {"z1", "z2", "z3", "z4"}, [](std::span<const double> x) {
    const auto& m = rotation();
    std::vector<double> z(4, 0.0);
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 4; ++i) z[k] += m[k][i] * x[i];
    return z;
  });
  TransformStage sphere("spherical chart",
                        {"q1*sin(q2)*sin(q3)*sin(q4)", "q1*sin(q2)*sin(q3)*cos(q4)", "q1*sin(q2)*cos(q3)",
                         "q1*cos(q2)"},
                        {"q1", "q2", "q3", "q4"}, [](std::span<const double> z) {
                          const double r = std::sqrt(z[0] * z[0] + z[1] * z[1] + z[2] * z[2] + z[3] * z[3]);
                          return std::vector<double>{r, std::acos(z[3] / r),
                                                     std::atan2(std::hypot(z[0], z[1]), z[2]),
                                                     std::atan2(z[0], z[1])};
                        });
  return CanonicalTransform({std::move(rotate), std::move(sphere)});
}

/// Smallest |x_i - x_j| at Cartesian point x.
inline double min_gap(std::span<const double> x) {
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) g = std::min(g, std::abs(x[i] - x[j]));
  return g;
}

}  // namespace calogero

inline CatalogEntry calogero4() {
  using namespace calogero;
  CatalogEntry e;
  e.name = "calogero4";
  const std::vector<std::string> q{"q1", "q2", "q3", "q4"};  // r, phi1, phi2, phi3
  auto s = StackelMatrix::from_strings({{"1", "0", "-1/q1^2"},
                                        {"0", "1/(2*sin(q2)^2)", "(2*sin(q2)^2-1)/(2*sin(q2)^2)"},
                                        {"0", "-1/2", "1/2"}});
  std::vector<NaturalBlock> blocks{NaturalBlock::from_strings({{"1"}}, "0"),
                                   NaturalBlock::from_strings({{"1"}}, "0"),
                                   NaturalBlock::from_strings({{"1", "0"}, {"0", "1/sin(q3)^2"}},
                                                              leaf_potential_string())};
  const double pi = std::numbers::pi;
  const double band = 0.1;
  e.box = {{0.5, band, band, -pi + band}, {2.0, pi - band, pi - band, pi - band}};
  CanonicalTransform tr = transform();
  e.acceptable = [tr](std::span<const double> y) { return min_gap(tr.inverse_positions(y)) > 0.05; };
  ProbeSpec probes{{}, e.box, 20, kDefaultSeed};
  e.system = std::make_shared<const TwistedSystem>(
      build_system(BlockStructure({1, 1, 2}, q), std::move(s), std::move(blocks), probes, std::nullopt));
  e.singular_sets = "collision planes x_i = x_j (|x_i - x_j| > 0.05 kept); phi1, phi2 within 0.1 of 0 or pi";

  CartesianReference ref;
  ref.names = cartesian_names();
  const std::string v = potential_string();
  ref.potential = ScalarField::from_string(v, ref.names);
  ref.hamiltonian = PhaseScalar::quadratic(
      4, TensorField2::constant(Matrix::Identity(4, 4), Variance::Contravariant), ref.potential);
  ref.killing.push_back(TensorField2::from_strings(k1_strings(), ref.names, Variance::Contravariant));
  ref.killing.push_back(TensorField2::from_strings(k2_strings(), ref.names, Variance::Contravariant));
  std::string pairs;
  for (int i = 1; i <= 4; ++i)
    for (int j = i + 1; j <= 4; ++j) pairs += " + x" + std::to_string(i) + "*x" + std::to_string(j);
  const std::string sq = "(x1^2 + x2^2 + x3^2 + x4^2)";
  const ScalarField w1 = ScalarField::from_string("(" + pairs.substr(3) + " - 0.5*" + sq + ")*(" + v + ")", ref.names);
  const ScalarField w2 = ScalarField::from_string(sq + "*(" + v + ")", ref.names);
  ref.integrals.push_back(ref.hamiltonian);
  ref.integrals.push_back(PhaseScalar::quadratic(4, ref.killing[0], w1));
  ref.integrals.push_back(PhaseScalar::quadratic(4, ref.killing[1], w2));
  ref.transform = std::move(tr);
  e.cartesian = std::move(ref);

  PhasePoint cart{{-1.2, -0.35, 0.45, 1.3}, {0.2, -0.1, 0.05, -0.1}};
  e.initial = e.cartesian->transform.forward(cart);
  e.t_end = 2.0;
  return e;
}

// --- E^3 families -------------------------------------------------------------

/// A diagonal metric on E^3 in coordinates (u, v, w) with a u-block and a
/// (v, w)-block, as produced by the two families below.
struct E3Metric {
  std::string name;
  std::vector<std::string> names{"u", "v", "w"};
  MetricField metric;
  Expression f;  // in v, w
  Expression l;  // case i: in v, w; case ii: in u
  double c0 = 0, c1 = 0, c2 = 0, c3 = 0;
  Box box;
};

namespace detail {

inline MetricField diagonal_metric(const std::vector<std::string>& diag, const std::vector<std::string>& names) {
  std::vector<std::vector<std::string>> g(3, std::vector<std::string>(3, "0"));
  for (std::size_t i = 0; i < 3; ++i) g[i][i] = diag[i];
  return MetricField::from_strings(g, names);
}

/// Value and first/second derivatives of an expression in (u, v, w).
struct Derivs {
  double v0 = 0, u = 0, v = 0, w = 0, uu = 0, vv = 0, ww = 0, vw = 0;
};

inline Derivs derivs(const Expression& e, const std::vector<std::string>& names, std::span<const double> q) {
  Program p(e, names);
  return {p.value(q),
          p.derivative(q, 0),
          p.derivative(q, 1),
          p.derivative(q, 2),
          p.second_derivative(q, 0, 0),
          p.second_derivative(q, 1, 1),
          p.second_derivative(q, 2, 2),
          p.second_derivative(q, 1, 2)};
}

inline void check_f(const Expression& f) {
  for (const auto& v : f.free_variables())
    if (v != "v" && v != "w") throw std::invalid_argument("f may depend on v and w only, found '" + v + "'");
}

}  // namespace detail

/// Case i: G = diag(f^-2, l^-2, l^-2), l = c2 exp(c0/2 (w^2 - v^2) - c1 v - c3 w).
inline E3Metric e3_case_i(double c0, double c1, double c2, double c3, const Expression& f) {
  if (c2 == 0.0) throw std::invalid_argument("e3_case_i: c2 must be nonzero");
  detail::check_f(f);
  const auto num = detail::format_number;
  E3Metric m;
  m.name = "e3-case-i";
  m.c0 = c0, m.c1 = c1, m.c2 = c2, m.c3 = c3;
  m.f = f;
  m.l = parse("(" + num(c2) + ")*exp((" + num(c0 / 2) + ")*(w^2 - v^2) - (" + num(c1) + ")*v - (" + num(c3) +
              ")*w)");
  const std::string fs = f.to_string(), ls = m.l.to_string();
  m.metric = detail::diagonal_metric({"(" + fs + ")^-2", "(" + ls + ")^-2", "(" + ls + ")^-2"}, m.names);
  m.box = {{-1, -0.5, -0.5}, {1, 0.5, 0.5}};
  return m;
}

/// Case ii: G = diag(1, l^2 f^2, l^2 f^2), l = -1/(c1 u + c2).
inline E3Metric e3_case_ii(double c1, double c2, const Expression& f) {
  if (c1 == 0.0 && c2 == 0.0) throw std::invalid_argument("e3_case_ii: (c1, c2) must not both vanish");
  detail::check_f(f);
  const auto num = detail::format_number;
  E3Metric m;
  m.name = "e3-case-ii";
  m.c1 = c1, m.c2 = c2;
  m.f = f;
  m.l = parse("-1/((" + num(c1) + ")*u + (" + num(c2) + "))");
  const std::string fl = "((" + m.l.to_string() + ")*(" + f.to_string() + "))^2";
  m.metric = detail::diagonal_metric({"1", fl, fl}, m.names);
  // keep u away from the pole u = -c2/c1
  const double pole = c1 != 0.0 ? -c2 / c1 : 0.0;
  const double u0 = c1 != 0.0 ? pole + (c1 > 0 ? 1.0 : -1.0) * 1.5 : 0.0;
  m.box = {{u0 - 0.5, -0.5, -0.5}, {u0 + 0.5, 0.5, 0.5}};
  return m;
}

/// Residuals of the case i compatibility system for l and f:
///   l(l_vv + l_ww) - l_v^2 - l_w^2,
///   l f_vv - l_v f_v + l_w f_w,   l f_ww + l_v f_v - l_w f_w,   l f_vw - l_v f_w - l_w f_v.
inline std::vector<double> case_i_compatibility_residuals(const E3Metric& m, std::span<const double> q) {
  const auto l = detail::derivs(m.l, m.names, q);
  const auto f = detail::derivs(m.f, m.names, q);
  return {l.v0 * (l.vv + l.ww) - l.v * l.v - l.w * l.w, l.v0 * f.vv - l.v * f.v + l.w * f.w,
          l.v0 * f.ww + l.v * f.v - l.w * f.w, l.v0 * f.vw - l.v * f.w - l.w * f.v};
}

/// Residuals of the linear system for f once l is fixed, a = c1 - c0 v,
/// b = c3 + c0 w:  f_vv + a f_v - b f_w,  f_ww - a f_v + b f_w,  f_vw + b f_v + a f_w.
inline std::vector<double> case_i_f_residuals(const E3Metric& m, std::span<const double> q) {
  const auto f = detail::derivs(m.f, m.names, q);
  const double a = m.c1 - m.c0 * q[1];
  const double b = m.c3 + m.c0 * q[2];
  return {f.vv + a * f.v - b * f.w, f.ww - a * f.v + b * f.w, f.vw + b * f.v + a * f.w};
}

/// Residuals of the case ii conditions:  l'' l - 2 l'^2  and
/// l^4 (f (f_vv + f_ww) - f_v^2 - f_w^2) - l'^2.
inline std::vector<double> case_ii_residuals(const E3Metric& m, std::span<const double> q) {
  const auto l = detail::derivs(m.l, m.names, q);
  const auto f = detail::derivs(m.f, m.names, q);
  const double l4 = l.v0 * l.v0 * l.v0 * l.v0;
  return {l.uu * l.v0 - 2 * l.u * l.u, l4 * (f.v0 * (f.vv + f.ww) - f.v * f.v - f.w * f.w) - l.u * l.u};
}

/// The leaf condition on f alone:  f (f_vv + f_ww) - f_v^2 - f_w^2 - c1^2.
inline double case_ii_leaf_residual(const E3Metric& m, std::span<const double> q) {
  const auto f = detail::derivs(m.f, m.names, q);
  return f.v0 * (f.vv + f.ww) - f.v * f.v - f.w * f.w - m.c1 * m.c1;
}

/// The metric induced on the leaf q^fixed = value, in the remaining
/// coordinates (in order). Valid for metrics whose `fixed` coordinate is
/// orthogonal to the others, as in both E^3 families.
inline MetricField leaf_metric(const MetricField& g, std::size_t fixed, double value) {
  const std::size_t n = g.dim();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (i != fixed) keep.push_back(i);
  const std::size_t m = keep.size();
  return MetricField(TensorField2(m, Variance::Contravariant, true, [g, keep, fixed, value, n, m](
                                                                          std::span<const double> y, int order) {
    std::vector<double> q(n);
    q[fixed] = value;
    for (std::size_t i = 0; i < m; ++i) q[keep[i]] = y[i];
    const MatJet full = g.contravariant(q, order);
    auto sub = [&](const Matrix& a) {
      Matrix out(ix(m), ix(m));
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) out(ix(i), ix(j)) = a(ix(keep[i]), ix(keep[j]));
      return out;
    };
    MatJet out(ix(m), ix(m), m, order);
    out.value = sub(full.value);
    if (order >= 1)
      for (std::size_t k = 0; k < m; ++k) out.grad[k] = sub(full.d(keep[k]));
    if (order >= 2)
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t l = 0; l < m; ++l) out.dd(k, l) = sub(full.dd(keep[k], keep[l]));
    return out;
  }));
}

/// Twisted system realizing a case i metric (up to the overall factor 2 of
/// the H = G p p / 2 convention) with the free constant `a` and positive g(v, w):
///   S = [[a, 1], [(1 - a/f^2) g l^2, -g l^2/f^2]],  H_1 = p_u^2,  H_2 = g (p_v^2 + p_w^2).
inline TwistedSystem e3_case_i_system(const E3Metric& m, double a, const std::string& g = "1") {
  const auto num = detail::format_number;
  const std::string f = "(" + m.f.to_string() + ")", l2 = "(" + m.l.to_string() + ")^2", gg = "(" + g + ")";
  auto s = StackelMatrix::from_strings(
      {{num(a), "1"}, {"(1 - " + num(a) + "/" + f + "^2)*" + gg + "*" + l2, "-" + gg + "*" + l2 + "/" + f + "^2"}});
  std::vector<NaturalBlock> blocks{NaturalBlock::from_strings({{"2"}}, "0"),
                                   NaturalBlock::from_strings({{"2*" + gg, "0"}, {"0", "2*" + gg}}, "0")};
  return build_system(BlockStructure({1, 2}, m.names), std::move(s), std::move(blocks), ProbeSpec{{}, m.box, 5},
                      std::nullopt);
}

/// Twisted system realizing a case ii metric:
///   S = [[1 - a l^2, -l^2], [a g/f^2, g/f^2]],  H_1 = p_u^2,  H_2 = g (p_v^2 + p_w^2).
inline TwistedSystem e3_case_ii_system(const E3Metric& m, double a, const std::string& g = "1") {
  const auto num = detail::format_number;
  const std::string f = "(" + m.f.to_string() + ")", l2 = "(" + m.l.to_string() + ")^2", gg = "(" + g + ")";
  auto s = StackelMatrix::from_strings(
      {{"1 - " + num(a) + "*" + l2, "-" + l2}, {num(a) + "*" + gg + "/" + f + "^2", gg + "/" + f + "^2"}});
  std::vector<NaturalBlock> blocks{NaturalBlock::from_strings({{"2"}}, "0"),
                                   NaturalBlock::from_strings({{"2*" + gg, "0"}, {"0", "2*" + gg}}, "0")};
  return build_system(BlockStructure({1, 2}, m.names), std::move(s), std::move(blocks), ProbeSpec{{}, m.box, 5},
                      std::nullopt);
}

/// Names addressable from the command line.
inline const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> n{"pendula", "oscillators", "calogero4", "e3-case-i", "e3-case-ii"};
  return n;
}

}  // namespace bsep
