#pragma once

/**
 * @file geometry.hpp
 * @brief Residual checks of the block-separation theory.
 *
 * Conventions used throughout:
 *  - antisymmetrization [ab] has weight 1/2, symmetrization (abc) 1/3!;
 *  - Gamma^i_{jk} = 1/2 g^{il} (d_j g_{lk} + d_k g_{lj} - d_l g_{jk});
 *  - R^i_{jkl} = d_k Gamma^i_{lj} - d_l Gamma^i_{kj}
 *              + Gamma^i_{km} Gamma^m_{lj} - Gamma^i_{lm} Gamma^m_{kj};
 *  - Nijenhuis: N^i_{jk} = T^i_l T^l_{[j,k]} + T^l_{[j} T^i_{k],l}, which is
 *    half the usual bracket-defined torsion;
 *  - Haantjes input: H^k_{ml} = T^n_m d_n T^k_l - T^n_l d_n T^k_m
 *                             - T^k_n (d_m T^n_l - d_l T^n_m).
 *
 * Every residual returns a max-norm; thresholds belong to the caller.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>

#include "bsep/linalg.hpp"
#include "bsep/model.hpp"
#include "bsep/sampling.hpp"
#include "bsep/tensor.hpp"

namespace bsep {

// --- parallel sweeps ---------------------------------------------------------

/// Applies fn to every point on a small thread pool; results keep order.
template <typename R>
std::vector<R> parallel_map(const std::vector<Point>& points, const std::function<R(const Point&)>& fn) {
  std::vector<R> out(points.size());
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), points.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = fn(points[i]);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < points.size(); i += workers) out[i] = fn(points[i]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Largest value of a residual over points, with the worst point.
struct SweepResult {
  double max = 0.0;
  Point worst;
  std::size_t points = 0;
};

inline SweepResult sweep_max(const std::vector<Point>& points, const std::function<double(const Point&)>& fn) {
  auto vals = parallel_map<double>(points, fn);
  SweepResult res;
  res.points = points.size();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (!(vals[i] <= res.max)) {  // NaN counts as worst
      res.max = std::isnan(vals[i]) ? INFINITY : vals[i];
      res.worst = points[i];
      if (std::isnan(vals[i])) break;
    }
  }
  return res;
}

// --- Poisson bracket ---------------------------------------------------------

inline double poisson_bracket(const PhaseScalar& f, const PhaseScalar& g, const PhasePoint& x) {
  if (f.dim() != g.dim() || f.dim() != x.dim())
    throw std::invalid_argument("poisson_bracket: phase-space dimensions differ");
  const PhaseValue a = f.eval(x);
  const PhaseValue b = g.eval(x);
  return a.dq.dot(b.dp) - a.dp.dot(b.dq);
}

// --- connection and curvature -----------------------------------------------

struct Connection {
  Tensor3 gamma;                // Gamma^i_{jk}
  std::vector<Tensor3> dgamma;  // dgamma[m](i,j,k) = d_m Gamma^i_{jk}
};

/// Christoffel symbols, and their first derivatives when order == 2.
inline Connection christoffel(const MetricField& metric, std::span<const double> q, int order = 1) {
  const std::size_t n = metric.dim();
  const MatJet up = metric.contravariant(q, order >= 2 ? 1 : 0);
  const MatJet lo = metric.covariant(q, order >= 2 ? 2 : 1);
  Connection c;
  c.gamma = Tensor3(n);
  // Gamma_{l jk} = 1/2 (d_j g_{lk} + d_k g_{lj} - d_l g_{jk})
  auto lowered = [&](std::size_t l, std::size_t j, std::size_t k) {
    return 0.5 * (lo.grad[j](ix(l), ix(k)) + lo.grad[k](ix(l), ix(j)) - lo.grad[l](ix(j), ix(k)));
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = j; k < n; ++k) {
        double s = 0;
        for (std::size_t l = 0; l < n; ++l) s += up.value(ix(i), ix(l)) * lowered(l, j, k);
        c.gamma(i, j, k) = s;
        c.gamma(i, k, j) = s;
      }
  if (order >= 2) {
    c.dgamma.assign(n, Tensor3(n));
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = j; k < n; ++k) {
            double s = 0;
            for (std::size_t l = 0; l < n; ++l) {
              const double dlow = 0.5 * (lo.dd(m, j)(ix(l), ix(k)) + lo.dd(m, k)(ix(l), ix(j)) -
                                         lo.dd(m, l)(ix(j), ix(k)));
              s += up.grad[m](ix(i), ix(l)) * lowered(l, j, k) + up.value(ix(i), ix(l)) * dlow;
            }
            c.dgamma[m](i, j, k) = s;
            c.dgamma[m](i, k, j) = s;
          }
  }
  return c;
}

/// R^i_{jkl}.
inline Tensor4 riemann(const MetricField& metric, std::span<const double> q) {
  const std::size_t n = metric.dim();
  const Connection c = christoffel(metric, q, 2);
  Tensor4 r(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = k + 1; l < n; ++l) {
          double s = c.dgamma[k](i, l, j) - c.dgamma[l](i, k, j);
          for (std::size_t m = 0; m < n; ++m)
            s += c.gamma(i, k, m) * c.gamma(m, l, j) - c.gamma(i, l, m) * c.gamma(m, k, j);
          r(i, j, k, l) = s;
          r(i, j, l, k) = -s;
        }
  return r;
}

/// Scalar curvature R = g^{jl} R^k_{jkl}.
inline double scalar_curvature(const MetricField& metric, std::span<const double> q) {
  const std::size_t n = metric.dim();
  const Tensor4 r = riemann(metric, q);
  const Matrix up = metric.contravariant(q, 0).value;
  double s = 0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t l = 0; l < n; ++l) {
      double ric = 0;
      for (std::size_t k = 0; k < n; ++k) ric += r(k, j, k, l);
      s += up(ix(j), ix(l)) * ric;
    }
  return s;
}

// --- Killing equation ---------------------------------------------------------

/// max |nabla_(i K_jk)| with K lowered by the metric if necessary.
inline double killing_residual(const MetricField& metric, const TensorField2& k, std::span<const double> q) {
  const std::size_t n = metric.dim();
  const MatJet kl = to_covariant(k, metric, q, 1);
  const Connection c = christoffel(metric, q, 1);
  auto nabla = [&](std::size_t i, std::size_t j, std::size_t l) {
    double s = kl.grad[i](ix(j), ix(l));
    for (std::size_t m = 0; m < n; ++m)
      s -= c.gamma(m, i, j) * kl.value(ix(m), ix(l)) + c.gamma(m, i, l) * kl.value(ix(j), ix(m));
    return s;
  };
  double worst = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      for (std::size_t l = j; l < n; ++l) {
        const double s = (nabla(i, j, l) + nabla(i, l, j) + nabla(j, i, l) + nabla(j, l, i) + nabla(l, i, j) +
                          nabla(l, j, i)) /
                         6.0;
        worst = std::max(worst, std::abs(s));
      }
  return worst;
}

// --- Nijenhuis, Haantjes, Tonolo–Schouten–Nijenhuis --------------------------

namespace detail {

inline MatJet mixed_jet(const TensorField2& t, const MetricField* metric, std::span<const double> q, int order) {
  if (t.variance() == Variance::Mixed) return t.eval(q, order);
  if (!metric) throw std::invalid_argument("a metric is needed to bring the tensor to mixed form");
  return to_mixed(t, *metric, q, order);
}

}  // namespace detail

inline Tensor3 nijenhuis_from_jet(const MatJet& t) {
  const std::size_t n = std::size_t(t.rows());
  Tensor3 out(n);
  auto T = [&](std::size_t a, std::size_t b) { return t.value(ix(a), ix(b)); };
  auto dT = [&](std::size_t c, std::size_t a, std::size_t b) { return t.grad[c](ix(a), ix(b)); };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) {
        double s = 0;
        for (std::size_t l = 0; l < n; ++l) {
          s += T(i, l) * 0.5 * (dT(k, l, j) - dT(j, l, k));
          s += 0.5 * (T(l, j) * dT(l, i, k) - T(l, k) * dT(l, i, j));
        }
        out(i, j, k) = s;
        out(i, k, j) = -s;
      }
  return out;
}

/// N^i_{jk} of a mixed tensor (other variances are converted with `metric`).
inline Tensor3 nijenhuis(const TensorField2& t, std::span<const double> q, const MetricField* metric = nullptr) {
  return nijenhuis_from_jet(detail::mixed_jet(t, metric, q, 1));
}

struct HaantjesResult {
  Tensor3 tensor;     // H^k_{ml}
  Tensor3 condition;  // full condition of the Haantjes theorem
  double tensor_max = 0.0;
  double condition_max = 0.0;
};

inline HaantjesResult haantjes(const TensorField2& t, std::span<const double> q, const MetricField* metric = nullptr) {
  const MatJet tj = detail::mixed_jet(t, metric, q, 1);
  const std::size_t n = std::size_t(tj.rows());
  auto T = [&](std::size_t a, std::size_t b) { return tj.value(ix(a), ix(b)); };
  auto dT = [&](std::size_t c, std::size_t a, std::size_t b) { return tj.grad[c](ix(a), ix(b)); };
  HaantjesResult res;
  res.tensor = Tensor3(n);
  Tensor3& H = res.tensor;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t l = 0; l < n; ++l) {
        double s = 0;
        for (std::size_t v = 0; v < n; ++v)
          s += T(v, m) * dT(v, k, l) - T(v, l) * dT(v, k, m) - T(k, v) * (dT(m, v, l) - dT(l, v, m));
        H(k, m, l) = s;
      }
  // T^2
  Matrix t2 = tj.value * tj.value;
  res.condition = Tensor3(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t l = 0; l < n; ++l) {
        double s = 0;
        for (std::size_t v = 0; v < n; ++v)
          for (std::size_t w = 0; w < n; ++w) s += H(k, v, w) * T(v, m) * T(w, l);
        for (std::size_t w = 0; w < n; ++w) {
          double inner = 0;
          for (std::size_t v = 0; v < n; ++v) inner += H(w, v, l) * T(v, m) - H(w, v, m) * T(v, l);
          s -= inner * T(k, w);
        }
        for (std::size_t v = 0; v < n; ++v) s += H(v, m, l) * t2(ix(k), ix(v));
        res.condition(k, m, l) = s;
      }
  res.tensor_max = res.tensor.max_abs();
  res.condition_max = res.condition.max_abs();
  return res;
}

struct TsnResiduals {
  double metric = 0.0;  // N^l_{[ij} g_{k]l}
  double first = 0.0;   // N^l_{[ij} K_{k]l}
  double second = 0.0;  // N^l_{[ij} K_{k]m} K^m_l
  double max() const { return std::max({metric, first, second}); }
};

inline TsnResiduals tsn_residuals(const TensorField2& k, const MetricField& metric, std::span<const double> q) {
  const MatJet tj = detail::mixed_jet(k, &metric, q, 1);
  const std::size_t n = std::size_t(tj.rows());
  const Tensor3 N = nijenhuis_from_jet(tj);
  const Matrix g = metric.covariant(q, 0).value;
  const Matrix kl = g * tj.value;       // K_{kl} = g_{ka} T^a_l
  const Matrix k2 = kl * tj.value;      // K_{km} T^m_l
  auto antisym = [&](const Matrix& b) {
    // 1/6 sum over permutations of (i, j, k) with sign, of N^l_{ij} b_{kl}
    auto term = [&](std::size_t i, std::size_t j, std::size_t kk) {
      double s = 0;
      for (std::size_t l = 0; l < n; ++l) s += N(l, i, j) * b(ix(kk), ix(l));
      return s;
    };
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        for (std::size_t kk = j + 1; kk < n; ++kk) {
          const double s = (term(i, j, kk) + term(j, kk, i) + term(kk, i, j) - term(j, i, kk) - term(i, kk, j) -
                            term(kk, j, i)) /
                           6.0;
          worst = std::max(worst, std::abs(s));
        }
    return worst;
  };
  return {antisym(g), antisym(kl), antisym(k2)};
}

// --- characteristic tensor condition ----------------------------------------

/// max |d(T dV)|_{ij| with (T dV)_i = T^j_i d_j V.
inline double characteristic_condition(const TensorField2& t, const ScalarField& v, std::span<const double> q,
                                       const MetricField* metric = nullptr) {
  const MatJet tj = detail::mixed_jet(t, metric, q, 1);
  const Jet vj = v.eval(q, 2);
  const std::size_t n = std::size_t(tj.rows());
  // d_i w_j = d_i T^k_j d_k V + T^k_j d_i d_k V
  auto dw = [&](std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t k = 0; k < n; ++k)
      s += tj.grad[i](ix(k), ix(j)) * vj.grad[ix(k)] + tj.value(ix(k), ix(j)) * vj.hess(ix(i), ix(k));
    return s;
  };
  double worst = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) worst = std::max(worst, std::abs(dw(i, j) - dw(j, i)));
  return worst;
}

// --- eigenvalues ------------------------------------------------------------

class VanishingTwistError : public std::runtime_error {
 public:
  VanishingTwistError(std::size_t block, const std::string& what) : std::runtime_error(what), block_(block) {}
  std::size_t block() const { return block_; }

 private:
  std::size_t block_;
};

namespace detail {

inline void check_twist(const Vector& alpha) {
  const double scale = alpha.cwiseAbs().maxCoeff();
  for (Eigen::Index r = 0; r < alpha.size(); ++r)
    if (!(std::abs(alpha[r]) > 1e-12 * scale))
      throw VanishingTwistError(std::size_t(r), "twist function alpha^" + std::to_string(r + 1) + " vanishes");
}

}  // namespace detail

/// lambda^a_r = (S^{-1})[a][r] / alpha^r for every block r.
inline Vector block_eigenvalues(const TwistedSystem& sys, std::size_t a, std::span<const double> q) {
  if (a >= sys.block_count()) throw ModelError(ModelError::Kind::Index, "integral index out of range");
  const Vector alpha = sys.alpha(q);
  detail::check_twist(alpha);
  const Matrix inv = sys.twist_rows(q).inverse;
  Vector out(alpha.size());
  for (Eigen::Index r = 0; r < alpha.size(); ++r) out[r] = (a == 0 ? alpha[r] : inv(ix(a), r)) / alpha[r];
  return out;
}

struct EigenCluster {
  double value = 0.0;
  std::size_t multiplicity = 0;
};

struct EigenClusters {
  std::vector<EigenCluster> clusters;  // ascending
  bool degenerate = false;             // grouping changed under a 10x tolerance
};

namespace detail {

inline std::vector<EigenCluster> cluster(std::vector<double> vals, double rel) {
  std::sort(vals.begin(), vals.end());
  std::vector<EigenCluster> out;
  for (double v : vals) {
    if (!out.empty() && std::abs(v - out.back().value) <= rel * (1 + std::abs(v))) {
      auto& c = out.back();
      c.value = (c.value * double(c.multiplicity) + v) / double(c.multiplicity + 1);
      ++c.multiplicity;
    } else {
      out.push_back({v, 1});
    }
  }
  return out;
}

}  // namespace detail

/// Eigenvalues of K relative to G (roots of det(K - lambda G) = 0 for two
/// contravariant tensors), grouped into multiplicity clusters.
inline EigenClusters generalized_eigenvalues(const Matrix& k, const Matrix& g, double rel_tol = 1e-8) {
  Eigen::EigenSolver<Matrix> es(g.fullPivLu().solve(k), false);
  std::vector<double> vals;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) vals.push_back(es.eigenvalues()[i].real());
  EigenClusters res;
  res.clusters = detail::cluster(vals, rel_tol);
  auto coarse = detail::cluster(vals, rel_tol * 10);
  res.degenerate = coarse.size() != res.clusters.size();
  return res;
}

/// Rank test: T - lambda I has nullity equal to each cluster's multiplicity
/// (the eigenvectors of a root span a space of the right dimension).
inline bool eigenvectors_complete(const Matrix& t, const EigenClusters& ev, double tol = 1e-8) {
  const Eigen::Index n = t.rows();
  for (const auto& c : ev.clusters) {
    Eigen::FullPivLU<Matrix> lu(t - c.value * Matrix::Identity(n, n));
    lu.setThreshold(tol);
    if (std::size_t(n - lu.rank()) != c.multiplicity) return false;
  }
  return true;
}

// --- block-Eisenhart and block-Levi-Civita -----------------------------------

/// max over s, r, r_k of |d_{r_k} lambda^s_a - (lambda^r_a - lambda^s_a) d_{r_k} ln|alpha^s||.
inline double block_eisenhart_residual(const TwistedSystem& sys, std::size_t a, std::span<const double> q) {
  if (a >= sys.block_count()) throw ModelError(ModelError::Kind::Index, "integral index out of range");
  const std::size_t n = sys.block_count();
  if (n == 1) return 0.0;
  const MatJet tw = sys.twist_inverse_jet(q, 1).jet;
  const MatJet in = sys.inverse_jet(q, 1).jet;
  Vector alpha = tw.value.row(0).transpose();
  detail::check_twist(alpha);
  const auto& st = sys.structure();
  std::vector<double> lambda(n);
  for (std::size_t s = 0; s < n; ++s) lambda[s] = in.value(ix(a), ix(s)) / alpha[ix(s)];
  double worst = 0;
  for (std::size_t k = 0; k < sys.dim(); ++k) {
    const std::size_t r = st.block_of(k);
    for (std::size_t s = 0; s < n; ++s) {
      const double as = alpha[ix(s)];
      const double das = tw.grad[k](0, ix(s));
      const double dlam = (in.grad[k](ix(a), ix(s)) * as - in.value(ix(a), ix(s)) * das) / (as * as);
      const double res = dlam - (lambda[r] - lambda[s]) * das / as;
      worst = std::max(worst, std::abs(res));
    }
  }
  return worst;
}

struct LeviCivitaResiduals {
  double metric = 0.0;     // on alpha^m
  double potential = 0.0;  // on V = alpha^r V_r
};

/// alpha^r alpha^s d_{r_i s_j} F - alpha^r d_{r_i} alpha^s d_{s_j} F
///   - alpha^s d_{s_j} alpha^r d_{r_i} F, for r != s, with F = alpha^m and F = V.
inline LeviCivitaResiduals block_levi_civita_residual(const TwistedSystem& sys, std::span<const double> q) {
  const std::size_t n = sys.block_count();
  LeviCivitaResiduals res;
  if (n == 1) return res;
  const auto& st = sys.structure();
  const MatJet tw = sys.twist_inverse_jet(q, 2).jet;
  const Jet v = system_potential(sys, 0).eval(q, 2);
  auto apply = [&](auto&& df, auto&& ddf) {
    double worst = 0;
    for (std::size_t i = 0; i < sys.dim(); ++i)
      for (std::size_t j = 0; j < sys.dim(); ++j) {
        const std::size_t r = st.block_of(i);
        const std::size_t s = st.block_of(j);
        if (r == s) continue;
        const double ar = tw.value(0, ix(r));
        const double as = tw.value(0, ix(s));
        const double val = ar * as * ddf(i, j) - ar * tw.grad[i](0, ix(s)) * df(j) - as * tw.grad[j](0, ix(r)) * df(i);
        worst = std::max(worst, std::abs(val));
      }
    return worst;
  };
  for (std::size_t m = 0; m < n; ++m) {
    res.metric = std::max(res.metric, apply([&](std::size_t k) { return tw.grad[k](0, ix(m)); },
                                            [&](std::size_t k, std::size_t l) { return tw.dd(k, l)(0, ix(m)); }));
  }
  res.potential = apply([&](std::size_t k) { return v.grad[ix(k)]; },
                        [&](std::size_t k, std::size_t l) { return v.hess(ix(k), ix(l)); });
  return res;
}

}  // namespace bsep
