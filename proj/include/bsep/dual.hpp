#pragma once

/**
 * @file dual.hpp
 * @brief Forward-mode dual numbers (value + one tangent).
 *
 * Nesting gives second derivatives: for Dual<Dual<double>> seeded with
 * the outer tangent along x_k and the inner tangent along x_l, the
 * component `.eps.eps` of the result is d^2 f / dx_k dx_l.
 *
 * @code
 * bsep::Dual<double> x{3.0, 1.0};
 * auto y = x * x;          // y.val == 9, y.eps == 6
 * @endcode
 */

#include <cmath>
#include <type_traits>

namespace bsep {

template <typename T>
struct Dual {
  T val{};
  T eps{};

  constexpr Dual() = default;
  constexpr Dual(const T& v, const T& e) : val(v), eps(e) {}

  template <typename U>
    requires std::is_arithmetic_v<U>
  constexpr Dual(U v) : val(T(v)), eps(T(0)) {}

  constexpr Dual(const T& v)
    requires(!std::is_arithmetic_v<T>)
      : val(v), eps(T(0)) {}
};

template <typename T>
struct is_dual : std::false_type {};
template <typename T>
struct is_dual<Dual<T>> : std::true_type {};

/// Innermost real value of a (possibly nested) dual.
constexpr double primal(double x) { return x; }
template <typename T>
constexpr double primal(const Dual<T>& x) {
  return primal(x.val);
}

// ---------------------------------------------------------------------------
// Arithmetic

template <typename T>
constexpr Dual<T> operator-(const Dual<T>& a) {
  return {-a.val, -a.eps};
}

template <typename T>
constexpr Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.val + b.val, a.eps + b.eps};
}
template <typename T>
constexpr Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.val - b.val, a.eps - b.eps};
}
template <typename T>
constexpr Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.val * b.val, a.val * b.eps + a.eps * b.val};
}
template <typename T>
constexpr Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.val / b.val;
  return {q, (a.eps - q * b.eps) / b.val};
}

template <typename T>
constexpr Dual<T> operator+(const Dual<T>& a, double b) {
  return {a.val + b, a.eps};
}
template <typename T>
constexpr Dual<T> operator+(double a, const Dual<T>& b) {
  return {a + b.val, b.eps};
}
template <typename T>
constexpr Dual<T> operator-(const Dual<T>& a, double b) {
  return {a.val - b, a.eps};
}
template <typename T>
constexpr Dual<T> operator-(double a, const Dual<T>& b) {
  return {a - b.val, -b.eps};
}
template <typename T>
constexpr Dual<T> operator*(const Dual<T>& a, double b) {
  return {a.val * b, a.eps * b};
}
template <typename T>
constexpr Dual<T> operator*(double a, const Dual<T>& b) {
  return {a * b.val, a * b.eps};
}
template <typename T>
constexpr Dual<T> operator/(const Dual<T>& a, double b) {
  return {a.val / b, a.eps / b};
}
template <typename T>
constexpr Dual<T> operator/(double a, const Dual<T>& b) {
  T q = a / b.val;
  return {q, -q * b.eps / b.val};
}

template <typename T>
constexpr Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) {
  a.val += b.val;
  a.eps += b.eps;
  return a;
}
template <typename T>
constexpr Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) {
  a.val -= b.val;
  a.eps -= b.eps;
  return a;
}
template <typename T>
constexpr Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) {
  a = a * b;
  return a;
}

// ---------------------------------------------------------------------------
// Elementary functions. Found by ADL from generic code that also does
// `using std::sin;` etc. so the same template serves double and duals.

template <typename T>
Dual<T> sin(const Dual<T>& a) {
  using std::cos;
  using std::sin;
  return {sin(a.val), cos(a.val) * a.eps};
}

template <typename T>
Dual<T> cos(const Dual<T>& a) {
  using std::cos;
  using std::sin;
  return {cos(a.val), -sin(a.val) * a.eps};
}

template <typename T>
Dual<T> tan(const Dual<T>& a) {
  using std::cos;
  using std::tan;
  T c = cos(a.val);
  return {tan(a.val), a.eps / (c * c)};
}

template <typename T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  T e = exp(a.val);
  return {e, e * a.eps};
}

template <typename T>
Dual<T> log(const Dual<T>& a) {
  using std::log;
  return {log(a.val), a.eps / a.val};
}

template <typename T>
Dual<T> sqrt(const Dual<T>& a) {
  using std::sqrt;
  T s = sqrt(a.val);
  return {s, a.eps / (2.0 * s)};
}

template <typename T>
Dual<T> abs(const Dual<T>& a) {
  double x = primal(a.val);
  if (x > 0) return a;
  if (x < 0) return -a;
  // Derivative of |x| at 0 is taken as 0.
  return {a.val, a.eps * 0.0};
}

/// x^n for integer n (repeated squaring keeps the value exact for small n).
inline double powi(double x, long n) {
  if (n < 0) return 1.0 / powi(x, -n);
  double result = 1.0;
  double base = x;
  while (n > 0) {
    if (n & 1) result *= base;
    base *= base;
    n >>= 1;
  }
  return result;
}

template <typename T>
Dual<T> powi(const Dual<T>& a, long n) {
  if (n == 0) return Dual<T>(1.0);
  // d(a^n) = n a^(n-1) da
  T lower = powi(a.val, n - 1);
  return {lower * a.val, double(n) * lower * a.eps};
}

/// x^c for a real constant exponent; caller guarantees x > 0 or c integral.
inline double powc(double x, double c) { return std::pow(x, c); }

template <typename T>
Dual<T> powc(const Dual<T>& a, double c) {
  T lower = powc(a.val, c - 1.0);
  return {lower * a.val, c * lower * a.eps};
}

}  // namespace bsep
