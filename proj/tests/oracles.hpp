#pragma once

// Independent reference computations used only by the tests: central finite
// differences, composite Simpson quadrature, adjugate-based 3x3 inverse, and
// a seeded random-expression generator.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Fn = std::function<double(const std::vector<double>&)>;

inline double step_first(double x) { return std::max(1e-6, 1e-6 * std::abs(x)); }
inline double step_second(double x) { return std::max(1e-4, 1e-4 * std::abs(x)); }

/// Central difference, fourth order (two stencils).
inline double fd_first(const Fn& f, std::vector<double> x, std::size_t k) {
  const double h = step_first(x[k]);
  const double x0 = x[k];
  auto at = [&](double d) {
    x[k] = x0 + d;
    return f(x);
  };
  return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
}

inline double fd_second(const Fn& f, std::vector<double> x, std::size_t k, std::size_t l) {
  const double hk = step_second(x[k]);
  const double hl = step_second(x[l]);
  const double xk = x[k];
  const double xl = x[l];
  if (k == l) {
    auto at = [&](double d) {
      x[k] = xk + d;
      return f(x);
    };
    return (-at(2 * hk) + 16 * at(hk) - 30 * at(0) + 16 * at(-hk) - at(-2 * hk)) / (12 * hk * hk);
  }
  auto at = [&](double a, double b) {
    x[k] = xk + a;
    x[l] = xl + b;
    return f(x);
  };
  return (at(hk, hl) - at(hk, -hl) - at(-hk, hl) + at(-hk, -hl)) / (4 * hk * hl);
}

/// Composite Simpson rule with `m` (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int m) {
  if (m % 2) ++m;
  const double h = (b - a) / m;
  double s = f(a) + f(b);
  for (int i = 1; i < m; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

using M3 = std::array<std::array<double, 3>, 3>;

inline double det3(const M3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

inline M3 inverse3(const M3& m) {
  const double d = det3(m);
  M3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int a0 = (j + 1) % 3, a1 = (j + 2) % 3, b0 = (i + 1) % 3, b1 = (i + 2) % 3;
      r[i][j] = (m[a0][b0] * m[a1][b1] - m[a0][b1] * m[a1][b0]) / d;
    }
  return r;
}

/// Random expression over q1..q<vars>, avoiding domain trouble by wrapping
/// ln/sqrt arguments in 1 + x^2 and keeping divisors away from zero.
class ExprGen {
 public:
  ExprGen(std::uint64_t seed, int vars) : rng_(seed), vars_(vars) {}

  /// Always mentions at least one variable.
  std::string make(int depth = 4) {
    for (;;) {
      std::string s = node(depth);
      if (s.find('q') != std::string::npos) return s;
    }
  }

 private:
  std::string var() {
    return "q" + std::to_string(std::uniform_int_distribution<int>(1, vars_)(rng_));
  }
  std::string num() {
    std::uniform_int_distribution<int> d(1, 9);
    return std::to_string(d(rng_) % 2) + "." + std::to_string(d(rng_));
  }
  std::string node(int depth) {
    if (depth == 0) return std::uniform_int_distribution<int>(0, 2)(rng_) ? var() : num();
    switch (std::uniform_int_distribution<int>(0, 9)(rng_)) {
      case 0: return "(" + node(depth - 1) + " + " + node(depth - 1) + ")";
      case 1: return "(" + node(depth - 1) + " - " + node(depth - 1) + ")";
      case 2: return node(depth - 1) + " * " + node(depth - 1);
      case 3: return node(depth - 1) + " / (2 + " + node(depth - 1) + "^2)";
      case 4: return "sin(" + node(depth - 1) + ")";
      case 5: return "cos(" + node(depth - 1) + ")";
      case 6: return "exp(0.3 * sin(" + node(depth - 1) + "))";
      case 7: return "ln(1 + (" + node(depth - 1) + ")^2)";
      case 8: return "sqrt(1 + (" + node(depth - 1) + ")^2)";
      default: return "(" + node(depth - 1) + ")^" + std::to_string(std::uniform_int_distribution<int>(2, 3)(rng_));
    }
  }

  std::mt19937_64 rng_;
  int vars_;
};

}  // namespace oracle
