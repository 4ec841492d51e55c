#pragma once

// Small dense linear algebra on top of Eigen, plus "jets": values carried
// together with their first and second partial derivatives with respect to
// the N configuration coordinates. Jets propagate analytically through
// products and inverses, d(A^{-1}) = -A^{-1} (dA) A^{-1}, and once more by
// the product rule for second derivatives.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

constexpr Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(double condition, const std::string& what)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

inline constexpr double kConditionError = 1e12;
inline constexpr double kConditionWarning = 1e8;

struct Inverse {
  Matrix value;
  double condition = 0.0;  // 1-norm condition number
  bool ill_conditioned = false;  // condition > kConditionWarning
};

inline double norm1(const Matrix& m) {
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

/// LU with partial pivoting. Throws SingularMatrixError on an exactly zero
/// pivot or when cond_1 exceeds kConditionError.
inline Inverse invert(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("invert: matrix is not square");
  Eigen::PartialPivLU<Matrix> lu(m);
  const Matrix& packed = lu.matrixLU();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (packed(i, i) == 0.0 || !std::isfinite(packed(i, i))) {
      throw SingularMatrixError(INFINITY, "singular matrix (zero pivot)");
    }
  }
  Inverse out;
  out.value = lu.inverse();
  out.condition = norm1(m) * norm1(out.value);
  if (!(out.condition <= kConditionError)) {
    throw SingularMatrixError(out.condition, "matrix is numerically singular (cond_1 = " +
                                                 std::to_string(out.condition) + ")");
  }
  out.ill_conditioned = out.condition > kConditionWarning;
  return out;
}

/// Scalar with gradient and Hessian in N variables.
struct Jet {
  double value = 0.0;
  Vector grad;
  Matrix hess;

  static Jet zero(std::size_t n) {
    Jet j;
    j.grad = Vector::Zero(static_cast<Eigen::Index>(n));
    j.hess = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    return j;
  }
};

inline Jet operator*(const Jet& a, const Jet& b) {
  Jet r;
  r.value = a.value * b.value;
  r.grad = a.grad * b.value + a.value * b.grad;
  r.hess = a.hess * b.value + a.value * b.hess + a.grad * b.grad.transpose() +
           b.grad * a.grad.transpose();
  return r;
}

inline Jet operator+(const Jet& a, const Jet& b) {
  return {a.value + b.value, a.grad + b.grad, a.hess + b.hess};
}

inline Jet operator*(double s, const Jet& a) { return {s * a.value, s * a.grad, s * a.hess}; }

/// Matrix-valued jet: value plus per-variable first and second partials.
/// `order` says how many derivative levels are populated (0, 1 or 2).
struct MatJet {
  Matrix value;
  std::vector<Matrix> grad;  // grad[k] = d/dx_k
  std::vector<Matrix> hess;  // hess[k * n + l] = d^2/dx_k dx_l
  std::size_t vars = 0;
  int order = 0;

  MatJet() = default;
  MatJet(Eigen::Index rows, Eigen::Index cols, std::size_t n, int ord) : vars(n), order(ord) {
    value = Matrix::Zero(rows, cols);
    if (ord >= 1) grad.assign(n, Matrix::Zero(rows, cols));
    if (ord >= 2) hess.assign(n * n, Matrix::Zero(rows, cols));
  }

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }

  const Matrix& d(std::size_t k) const { return grad[k]; }
  const Matrix& dd(std::size_t k, std::size_t l) const { return hess[k * vars + l]; }
  Matrix& dd(std::size_t k, std::size_t l) { return hess[k * vars + l]; }

  /// Scalar jet of one entry.
  Jet entry(Eigen::Index i, Eigen::Index j) const {
    Jet out = Jet::zero(vars);
    out.value = value(i, j);
    if (order >= 1)
      for (std::size_t k = 0; k < vars; ++k) out.grad[k] = grad[k](i, j);
    if (order >= 2)
      for (std::size_t k = 0; k < vars; ++k)
        for (std::size_t l = 0; l < vars; ++l) out.hess(k, l) = dd(k, l)(i, j);
    return out;
  }
};

inline MatJet multiply(const MatJet& a, const MatJet& b) {
  const int ord = std::min(a.order, b.order);
  MatJet r;
  r.vars = a.vars;
  r.order = ord;
  r.value = a.value * b.value;
  const std::size_t n = a.vars;
  if (ord >= 1) {
    r.grad.resize(n);
    for (std::size_t k = 0; k < n; ++k) r.grad[k] = a.grad[k] * b.value + a.value * b.grad[k];
  }
  if (ord >= 2) {
    r.hess.resize(n * n);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = 0; l < n; ++l)
        r.dd(k, l) = a.dd(k, l) * b.value + a.grad[k] * b.grad[l] + a.grad[l] * b.grad[k] +
                     a.value * b.dd(k, l);
  }
  return r;
}

inline MatJet transpose(const MatJet& a) {
  MatJet r = a;
  r.value.transposeInPlace();
  for (auto& g : r.grad) g.transposeInPlace();
  for (auto& h : r.hess) h.transposeInPlace();
  return r;
}

struct InverseJet {
  MatJet jet;
  double condition = 0.0;
  bool ill_conditioned = false;
};

/// Inverse with analytic derivatives:
///   d_k A^{-1}      = -A^{-1} (d_k A) A^{-1}
///   d_k d_l A^{-1}  = -(d_l A^{-1})(d_k A)A^{-1} - A^{-1}(d_k d_l A)A^{-1}
///                     - A^{-1}(d_k A)(d_l A^{-1})
inline InverseJet inverse(const MatJet& a) {
  Inverse inv = invert(a.value);
  InverseJet out;
  out.condition = inv.condition;
  out.ill_conditioned = inv.ill_conditioned;
  MatJet& r = out.jet;
  r.vars = a.vars;
  r.order = a.order;
  r.value = inv.value;
  const Matrix& ai = inv.value;
  const std::size_t n = a.vars;
  if (a.order >= 1) {
    r.grad.resize(n);
    for (std::size_t k = 0; k < n; ++k) r.grad[k] = -ai * a.grad[k] * ai;
  }
  if (a.order >= 2) {
    r.hess.resize(n * n);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = k; l < n; ++l) {
        Matrix h = -r.grad[l] * a.grad[k] * ai - ai * a.dd(k, l) * ai - ai * a.grad[k] * r.grad[l];
        r.dd(k, l) = h;
        if (l != k) r.dd(l, k) = h;
      }
  }
  return out;
}

/// Dense 3- and 4-index arrays for connection and curvature components.
struct Tensor3 {
  std::size_t n = 0;
  std::vector<double> data;
  explicit Tensor3(std::size_t dim = 0) : n(dim), data(dim * dim * dim, 0.0) {}
  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data[(i * n + j) * n + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * n + j) * n + k];
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
  }
};

struct Tensor4 {
  std::size_t n = 0;
  std::vector<double> data;
  explicit Tensor4(std::size_t dim = 0) : n(dim), data(dim * dim * dim * dim, 0.0) {}
  double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data[((i * n + j) * n + k) * n + l];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data[((i * n + j) * n + k) * n + l];
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
  }
};

}  // namespace bsep
