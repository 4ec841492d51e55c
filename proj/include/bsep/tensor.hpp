#pragma once

/**
 * @file tensor.hpp
 * @brief Tensor fields on configuration space evaluated as jets.
 *
 * Matrix conventions: a contravariant field K stores K^{ij} at (i, j), a
 * covariant field K_{ij} at (i, j), and a mixed field T^i_j at (i, j), so
 * that T acts on vectors by ordinary matrix multiplication.
 */

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsep/expr.hpp"
#include "bsep/linalg.hpp"
#include "bsep/model.hpp"

namespace bsep {

enum class Variance { Contravariant, Covariant, Mixed };

inline const char* to_string(Variance v) {
  switch (v) {
    case Variance::Contravariant: return "contravariant";
    case Variance::Covariant: return "covariant";
    case Variance::Mixed: return "mixed";
  }
  return "?";
}

/// Jet of a matrix of expressions, compiled against `names`.
class ExpressionGrid {
 public:
  ExpressionGrid() = default;
  ExpressionGrid(const std::vector<std::vector<Expression>>& grid, std::span<const std::string> names)
      : rows_(grid.size()), cols_(grid.empty() ? 0 : grid[0].size()), vars_(names.size()) {
    for (const auto& row : grid) {
      if (row.size() != cols_) throw std::invalid_argument("expression grid is ragged");
      for (const auto& e : row) progs_.emplace_back(e, names);
    }
  }

  MatJet eval(std::span<const double> q, int order) const {
    MatJet out(ix(rows_), ix(cols_), vars_, order);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) {
        const Program& p = progs_[i * cols_ + j];
        out.value(ix(i), ix(j)) = p.value(q);
        const auto& used = p.used_slots();
        if (order >= 1)
          for (std::size_t k : used) out.grad[k](ix(i), ix(j)) = p.derivative(q, k);
        if (order >= 2)
          for (std::size_t a = 0; a < used.size(); ++a)
            for (std::size_t b = a; b < used.size(); ++b) {
              const double h = p.second_derivative(q, used[a], used[b]);
              out.dd(used[a], used[b])(ix(i), ix(j)) = h;
              out.dd(used[b], used[a])(ix(i), ix(j)) = h;
            }
      }
    return out;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0, vars_ = 0;
  std::vector<Program> progs_;
};

inline std::vector<std::vector<Expression>> parse_grid(const std::vector<std::vector<std::string>>& src) {
  std::vector<std::vector<Expression>> out;
  for (const auto& row : src) {
    std::vector<Expression> r;
    for (const auto& s : row) r.push_back(parse(s));
    out.push_back(std::move(r));
  }
  return out;
}

/// N x N tensor field with a variance tag.
class TensorField2 {
 public:
  using Evaluator = std::function<MatJet(std::span<const double> q, int order)>;

  TensorField2() = default;
  TensorField2(std::size_t dim, Variance variance, bool symmetric, Evaluator eval)
      : dim_(dim), variance_(variance), symmetric_(symmetric), eval_(std::move(eval)) {}

  static TensorField2 from_expressions(const std::vector<std::vector<Expression>>& grid,
                                       std::span<const std::string> names, Variance variance) {
    if (grid.size() != names.size()) throw std::invalid_argument("tensor grid size does not match coordinates");
    bool symmetric = true;
    for (std::size_t i = 0; i < grid.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        symmetric = symmetric && grid[i][j].to_string() == grid[j][i].to_string();
    auto g = std::make_shared<ExpressionGrid>(grid, names);
    return TensorField2(names.size(), variance, symmetric,
                        [g](std::span<const double> q, int order) { return g->eval(q, order); });
  }

  static TensorField2 from_strings(const std::vector<std::vector<std::string>>& grid,
                                   std::span<const std::string> names, Variance variance) {
    return from_expressions(parse_grid(grid), names, variance);
  }

  static TensorField2 constant(const Matrix& m, Variance variance) {
    const std::size_t n = std::size_t(m.rows());
    return TensorField2(n, variance, m.isApprox(m.transpose(), 0.0), [m, n](std::span<const double>, int order) {
      MatJet out(m.rows(), m.cols(), n, order);
      out.value = m;
      return out;
    });
  }

  static TensorField2 identity(std::size_t n) { return constant(Matrix::Identity(ix(n), ix(n)), Variance::Mixed); }

  std::size_t dim() const { return dim_; }
  Variance variance() const { return variance_; }
  bool symmetric() const { return symmetric_; }
  MatJet eval(std::span<const double> q, int order) const { return eval_(q, order); }
  Matrix value(std::span<const double> q) const { return eval_(q, 0).value; }

 private:
  std::size_t dim_ = 0;
  Variance variance_ = Variance::Contravariant;
  bool symmetric_ = false;
  Evaluator eval_;
};

/// Metric given by its contravariant components G^{ij}; covariant
/// components come from the analytic inverse jet.
class MetricField {
 public:
  MetricField() = default;
  explicit MetricField(TensorField2 contravariant) : g_(std::move(contravariant)) {
    if (g_.variance() != Variance::Contravariant)
      throw std::invalid_argument("metric must be given by contravariant components");
  }

  static MetricField from_strings(const std::vector<std::vector<std::string>>& grid,
                                  std::span<const std::string> names) {
    return MetricField(TensorField2::from_strings(grid, names, Variance::Contravariant));
  }

  static MetricField euclidean(std::size_t n) {
    return MetricField(TensorField2::constant(Matrix::Identity(ix(n), ix(n)), Variance::Contravariant));
  }

  std::size_t dim() const { return g_.dim(); }
  const TensorField2& contravariant_field() const { return g_; }
  MatJet contravariant(std::span<const double> q, int order) const { return g_.eval(q, order); }
  MatJet covariant(std::span<const double> q, int order) const {
    try {
      return inverse(g_.eval(q, order)).jet;
    } catch (const SingularMatrixError& e) {
      throw SingularMatrixError(e.condition(), std::string("degenerate metric: ") + e.what());
    }
  }

 private:
  TensorField2 g_;
};

/// Scalar function on configuration space as a jet.
class ScalarField {
 public:
  using Evaluator = std::function<Jet(std::span<const double> q, int order)>;

  ScalarField() = default;
  ScalarField(std::size_t dim, Evaluator eval) : dim_(dim), eval_(std::move(eval)) {}

  static ScalarField from_expression(const Expression& e, std::span<const std::string> names) {
    auto prog = std::make_shared<Program>(e, names);
    const std::size_t n = names.size();
    return ScalarField(n, [prog, n](std::span<const double> q, int order) {
      Jet out = Jet::zero(n);
      out.value = prog->value(q);
      const auto& used = prog->used_slots();
      if (order >= 1)
        for (std::size_t k : used) out.grad[ix(k)] = prog->derivative(q, k);
      if (order >= 2)
        for (std::size_t a = 0; a < used.size(); ++a)
          for (std::size_t b = a; b < used.size(); ++b) {
            const double h = prog->second_derivative(q, used[a], used[b]);
            out.hess(ix(used[a]), ix(used[b])) = h;
            out.hess(ix(used[b]), ix(used[a])) = h;
          }
      return out;
    });
  }

  static ScalarField from_string(const std::string& src, std::span<const std::string> names) {
    return from_expression(parse(src), names);
  }

  static ScalarField zero(std::size_t n) {
    return ScalarField(n, [n](std::span<const double>, int) { return Jet::zero(n); });
  }

  std::size_t dim() const { return dim_; }
  Jet eval(std::span<const double> q, int order) const { return eval_(q, order); }
  double value(std::span<const double> q) const { return eval_(q, 0).value; }
  explicit operator bool() const { return static_cast<bool>(eval_); }

 private:
  std::size_t dim_ = 0;
  Evaluator eval_;
};

// --- index gymnastics on jets --------------------------------------------

inline MatJet constant_jet(const Matrix& m, std::size_t vars, int order) {
  MatJet out(m.rows(), m.cols(), vars, order);
  out.value = m;
  return out;
}

/// Mixed T^i_j from any variance, using the metric where needed.
inline MatJet to_mixed(const TensorField2& t, const MetricField& g, std::span<const double> q, int order) {
  switch (t.variance()) {
    case Variance::Mixed: return t.eval(q, order);
    case Variance::Contravariant: return multiply(t.eval(q, order), g.covariant(q, order));  // K^{ia} g_{aj}
    case Variance::Covariant: return multiply(g.contravariant(q, order), t.eval(q, order));  // g^{ia} K_{aj}
  }
  throw std::logic_error("unreachable");
}

/// Covariant K_{ij} from any variance.
inline MatJet to_covariant(const TensorField2& t, const MetricField& g, std::span<const double> q, int order) {
  switch (t.variance()) {
    case Variance::Covariant: return t.eval(q, order);
    case Variance::Mixed: return multiply(g.covariant(q, order), t.eval(q, order));  // g_{ia} T^a_j
    case Variance::Contravariant: {
      MatJet gl = g.covariant(q, order);
      return multiply(multiply(gl, t.eval(q, order)), gl);
    }
  }
  throw std::logic_error("unreachable");
}

/// Contravariant K^{ij} from any variance.
inline MatJet to_contravariant(const TensorField2& t, const MetricField& g, std::span<const double> q, int order) {
  switch (t.variance()) {
    case Variance::Contravariant: return t.eval(q, order);
    case Variance::Mixed: return multiply(t.eval(q, order), g.contravariant(q, order));  // T^i_a g^{aj}
    case Variance::Covariant: {
      MatJet gu = g.contravariant(q, order);
      return multiply(multiply(gu, t.eval(q, order)), gu);
    }
  }
  throw std::logic_error("unreachable");
}

inline TensorField2 lowered(const TensorField2& t, const MetricField& g) {
  return TensorField2(t.dim(), Variance::Covariant, t.symmetric(),
                      [t, g](std::span<const double> q, int order) { return to_covariant(t, g, q, order); });
}

inline TensorField2 raised(const TensorField2& t, const MetricField& g) {
  return TensorField2(t.dim(), Variance::Contravariant, t.symmetric(),
                      [t, g](std::span<const double> q, int order) { return to_contravariant(t, g, q, order); });
}

inline TensorField2 mixed(const TensorField2& t, const MetricField& g) {
  return TensorField2(t.dim(), Variance::Mixed, false,
                      [t, g](std::span<const double> q, int order) { return to_mixed(t, g, q, order); });
}

// --- fields assembled from a twisted system --------------------------------

namespace detail {

/// Block-diagonal N x N jet with block r equal to coeff_r * g_r.
inline MatJet block_diagonal(const TwistedSystem& sys, const MatJet& coeff_row, std::size_t row,
                             std::span<const double> q, int order) {
  const auto& st = sys.structure();
  const std::size_t N = sys.dim();
  MatJet out(ix(N), ix(N), N, order);
  for (std::size_t r = 0; r < sys.block_count(); ++r) {
    const Jet c = coeff_row.entry(ix(row), ix(r));
    const MatJet gr = sys.block_metric_jet(r, q, order);
    const std::size_t off = st.offset(r);
    const std::size_t nr = st.size(r);
    auto put = [&](Matrix& dst, const Matrix& src) { dst.block(ix(off), ix(off), ix(nr), ix(nr)) = src; };
    put(out.value, c.value * gr.value);
    if (order >= 1)
      for (std::size_t k = 0; k < N; ++k) put(out.grad[k], c.grad[ix(k)] * gr.value + c.value * gr.grad[k]);
    if (order >= 2)
      for (std::size_t k = 0; k < N; ++k)
        for (std::size_t l = 0; l < N; ++l)
          put(out.dd(k, l), c.hess(ix(k), ix(l)) * gr.value + c.grad[ix(k)] * gr.grad[l] +
                                c.grad[ix(l)] * gr.grad[k] + c.value * gr.dd(k, l));
  }
  return out;
}

}  // namespace detail

/// G^{r_i r_j} = alpha^r g_r^{ij}, zero across blocks.
inline MetricField system_metric(const TwistedSystem& sys) {
  const TwistedSystem* s = &sys;
  return MetricField(TensorField2(sys.dim(), Variance::Contravariant, true, [s](std::span<const double> q, int order) {
    return detail::block_diagonal(*s, s->twist_inverse_jet(q, order).jet, 0, q, order);
  }));
}

/// Contravariant Killing tensor k_a^{r_i r_j} = (S^{-1})[a][r] g_r^{ij}.
inline TensorField2 system_killing_tensor(const TwistedSystem& sys, std::size_t a) {
  const TwistedSystem* s = &sys;
  return TensorField2(sys.dim(), Variance::Contravariant, true, [s, a](std::span<const double> q, int order) {
    return a == 0 ? detail::block_diagonal(*s, s->twist_inverse_jet(q, order).jet, 0, q, order)
                  : detail::block_diagonal(*s, s->inverse_jet(q, order).jet, a, q, order);
  });
}

/// W_a = (S^{-1})[a][r] V_r; a = 0 gives V = alpha^r V_r.
inline ScalarField system_potential(const TwistedSystem& sys, std::size_t a) {
  const TwistedSystem* s = &sys;
  const std::size_t N = sys.dim();
  return ScalarField(N, [s, a, N](std::span<const double> q, int order) {
    const MatJet inv = a == 0 ? s->twist_inverse_jet(q, order).jet : s->inverse_jet(q, order).jet;
    Jet out = Jet::zero(N);
    for (std::size_t r = 0; r < s->block_count(); ++r) out = out + inv.entry(ix(a), ix(r)) * s->potential_jet(r, q, order);
    return out;
  });
}

// --- phase-space functions ---------------------------------------------------

/// F(q, p) with its q- and p-gradients.
struct PhaseValue {
  double value = 0.0;
  Vector dq;
  Vector dp;
};

/// F = 1/2 K^{ij} p_i p_j + A^i p_i + W.
class PhaseScalar {
 public:
  using Evaluator = std::function<PhaseValue(const PhasePoint&)>;

  PhaseScalar() = default;
  PhaseScalar(std::size_t dim, Evaluator eval) : dim_(dim), eval_(std::move(eval)) {}

  /// Quadratic in momenta. `k` must be contravariant (or empty for none).
  static PhaseScalar quadratic(std::size_t dim, std::optional<TensorField2> k, ScalarField w,
                               std::vector<ScalarField> linear = {}) {
    if (k && k->variance() != Variance::Contravariant)
      throw std::invalid_argument("PhaseScalar needs a contravariant quadratic part");
    return PhaseScalar(dim, [dim, k, w, linear](const PhasePoint& x) {
      PhaseValue out;
      const Eigen::Map<const Vector> p(x.p.data(), ix(dim));
      out.dq = Vector::Zero(ix(dim));
      out.dp = Vector::Zero(ix(dim));
      if (k) {
        const MatJet kj = k->eval(x.q, 1);
        const Vector kp = kj.value * p;
        out.value += 0.5 * p.dot(kp);
        out.dp += 0.5 * (kp + kj.value.transpose() * p);
        for (std::size_t i = 0; i < dim; ++i) out.dq[ix(i)] += 0.5 * p.dot(kj.grad[i] * p);
      }
      if (w) {
        const Jet wj = w.eval(x.q, 1);
        out.value += wj.value;
        out.dq += wj.grad;
      }
      for (std::size_t i = 0; i < linear.size(); ++i) {
        if (!linear[i]) continue;
        const Jet a = linear[i].eval(x.q, 1);
        out.value += a.value * p[ix(i)];
        out.dp[ix(i)] += a.value;
        out.dq += a.grad * p[ix(i)];
      }
      return out;
    });
  }

  /// The position function q^k.
  static PhaseScalar coordinate(std::size_t dim, std::size_t k) {
    return PhaseScalar(dim, [dim, k](const PhasePoint& x) {
      PhaseValue out{x.q[k], Vector::Zero(ix(dim)), Vector::Zero(ix(dim))};
      out.dq[ix(k)] = 1.0;
      return out;
    });
  }

  /// The momentum function p_k.
  static PhaseScalar momentum(std::size_t dim, std::size_t k) {
    return PhaseScalar(dim, [dim, k](const PhasePoint& x) {
      PhaseValue out{x.p[k], Vector::Zero(ix(dim)), Vector::Zero(ix(dim))};
      out.dp[ix(k)] = 1.0;
      return out;
    });
  }

  std::size_t dim() const { return dim_; }
  PhaseValue eval(const PhasePoint& x) const { return eval_(x); }
  double value(const PhasePoint& x) const { return eval_(x).value; }

 private:
  std::size_t dim_ = 0;
  Evaluator eval_;
};

/// K_a = (S^{-1})[a][r] H_r for a twisted system (a = 0 gives H), with
/// gradients assembled from the inverse jet and the block Hamiltonians.
inline PhaseScalar system_integral(const TwistedSystem& sys, std::size_t a) {
  const TwistedSystem* s = &sys;
  const std::size_t N = sys.dim();
  return PhaseScalar(N, [s, a, N](const PhasePoint& x) {
    const auto& st = s->structure();
    const MatJet inv = a == 0 ? s->twist_inverse_jet(x.q, 1).jet : s->inverse_jet(x.q, 1).jet;
    PhaseValue out{0.0, Vector::Zero(ix(N)), Vector::Zero(ix(N))};
    for (std::size_t r = 0; r < s->block_count(); ++r) {
      const std::size_t off = st.offset(r);
      const std::size_t nr = st.size(r);
      const MatJet g = s->block_metric_jet(r, x.q, 1);
      const Jet v = s->potential_jet(r, x.q, 1);
      const Eigen::Map<const Vector> p(x.p.data() + off, ix(nr));
      const Vector gp = g.value * p;
      const double hr = 0.5 * p.dot(gp) + v.value;
      const double coef = inv.value(ix(a), ix(r));
      out.value += coef * hr;
      for (std::size_t k = 0; k < N; ++k) out.dq[ix(k)] += inv.grad[k](ix(a), ix(r)) * hr;
      for (std::size_t i = 0; i < nr; ++i) {
        const std::size_t k = off + i;
        out.dq[ix(k)] += coef * (0.5 * p.dot(g.grad[k] * p) + v.grad[ix(k)]);
        out.dp[ix(k)] += coef * gp[ix(i)];
      }
    }
    return out;
  });
}

}  // namespace bsep
