#pragma once

/**
 * @file dynamics.hpp
 * @brief Hamiltonian vector fields of H and of the reduced H~_r, block
 * clocks tau_r, and the full-vs-reduced orbit comparison.
 *
 * State layouts:
 *  - full phase point:     (q_1..q_N, p_1..p_N)
 *  - simulated state:      (q, p, tau_1..tau_n), with d tau_r/dt = alpha^r
 *  - reduced block state:  (q_{r_1}..q_{r_nr}, p_{r_1}..p_{r_nr})
 */

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsep/integrator.hpp"
#include "bsep/model.hpp"

namespace bsep {

namespace detail {

/// H_r, its gradient along block r, and the velocity g_r p_r.
struct BlockParts {
  double energy = 0.0;
  std::vector<double> grad;      // dH_r/dq_{r_i}
  std::vector<double> velocity;  // g_r^{ij} p_j
};

inline BlockParts block_parts(const TwistedSystem& sys, std::size_t r, std::span<const double> q,
                              std::span<const double> p_block) {
  const auto& st = sys.structure();
  const std::size_t nr = st.size(r);
  const std::size_t off = st.offset(r);
  BlockParts out;
  out.grad.assign(nr, 0.0);
  out.velocity.assign(nr, 0.0);
  double kinetic = 0.0;
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nr; ++j) {
      const Program& g = sys.metric_program(r, i, j);
      const double gij = g.value(q);
      out.velocity[i] += gij * p_block[j];
      kinetic += gij * p_block[i] * p_block[j];
      if (!g.used_slots().empty())
        for (std::size_t k = 0; k < nr; ++k)
          out.grad[k] += 0.5 * g.derivative(q, off + k) * p_block[i] * p_block[j];
    }
  const Program& v = sys.potential_program(r);
  out.energy = 0.5 * kinetic + v.value(q);
  if (!v.used_slots().empty())
    for (std::size_t k = 0; k < nr; ++k) out.grad[k] += v.derivative(q, off + k);
  return out;
}

}  // namespace detail

/// X_H at a phase point: (dH/dp, -dH/dq), with
///   dH/dp_k = alpha^r g_r^{kj} p_j               (k in block r)
///   dH/dq_k = d_k alpha^s H_s + alpha^r d_k H_r
inline std::vector<double> full_field(const TwistedSystem& sys, const PhasePoint& x) {
  const auto& st = sys.structure();
  const std::size_t n = sys.block_count();
  const std::size_t N = sys.dim();
  const MatJet inv = sys.twist_inverse_jet(x.q, 1).jet;
  std::vector<double> out(2 * N, 0.0);
  std::vector<detail::BlockParts> parts;
  parts.reserve(n);
  for (std::size_t r = 0; r < n; ++r)
    parts.push_back(detail::block_parts(sys, r, x.q, std::span<const double>(x.p).subspan(st.offset(r), st.size(r))));
  for (std::size_t k = 0; k < N; ++k) {
    const std::size_t r = st.block_of(k);
    const std::size_t i = st.local_index(k);
    const double ar = inv.value(0, ix(r));
    out[k] = ar * parts[r].velocity[i];
    double dh = ar * parts[r].grad[i];
    for (std::size_t s = 0; s < n; ++s) dh += inv.d(k)(0, ix(s)) * parts[s].energy;
    out[N + k] = -dh;
  }
  return out;
}

/// Hamiltonian field of H~_r = H_r - c_a S(r, a) on block r's phase space.
inline std::vector<double> reduced_field(const TwistedSystem& sys, std::size_t r, std::span<const double> c,
                                         std::span<const double> block_state) {
  const auto& st = sys.structure();
  if (r >= sys.block_count()) throw ModelError(ModelError::Kind::Index, "block index out of range");
  if (c.size() != sys.block_count())
    throw ModelError(ModelError::Kind::Dimension, "separation constants have the wrong length");
  const std::size_t nr = st.size(r);
  const std::size_t off = st.offset(r);
  if (block_state.size() != 2 * nr)
    throw ModelError(ModelError::Kind::Dimension, "block state has the wrong length");
  const std::vector<double> q = sys.embed_block(r, block_state.first(nr));
  auto parts = detail::block_parts(sys, r, q, block_state.subspan(nr));
  std::vector<double> out(2 * nr);
  for (std::size_t i = 0; i < nr; ++i) {
    double force = parts.grad[i];
    for (std::size_t a = 0; a < c.size(); ++a) {
      const Program& s = sys.stackel_program(r, a);
      if (c[a] != 0.0 && !s.used_slots().empty()) force -= c[a] * s.derivative(q, off + i);
    }
    out[i] = parts.velocity[i];
    out[nr + i] = -force;
  }
  return out;
}

/// Block slice (q_r, p_r) of a full phase vector (q, p, ...).
inline std::vector<double> block_slice(const TwistedSystem& sys, std::size_t r, std::span<const double> y) {
  const auto& st = sys.structure();
  const std::size_t nr = st.size(r);
  const std::size_t off = st.offset(r);
  std::vector<double> out(2 * nr);
  for (std::size_t i = 0; i < nr; ++i) {
    out[i] = y[off + i];
    out[nr + i] = y[sys.dim() + off + i];
  }
  return out;
}

/// "q3" -> "p3", "r" -> "p_r".
inline std::string momentum_name(const std::string& q) {
  if (q.size() > 1 && q[0] == 'q') return "p" + q.substr(1);
  return "p_" + q;
}

/// max over blocks of |(X_H)_r - alpha^r X_{H~_r}| at x, relative to
/// max(1, |X_H|), with c taken from x itself.
inline double vector_field_identity_residual(const TwistedSystem& sys, const PhasePoint& x) {
  const auto& st = sys.structure();
  const std::size_t N = sys.dim();
  const auto full = full_field(sys, x);
  const Vector c = sys.separation_constants(x);
  const std::vector<double> cv(c.data(), c.data() + c.size());
  const Vector a = sys.alpha(x.q);
  double scale = 1.0;
  for (double v : full) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t r = 0; r < sys.block_count(); ++r) {
    const auto red = reduced_field(sys, r, cv, block_slice(sys, r, x.flat()));
    const std::size_t nr = st.size(r);
    for (std::size_t i = 0; i < nr; ++i) {
      const std::size_t k = st.offset(r) + i;
      worst = std::max(worst, std::abs(full[k] - a[ix(r)] * red[i]) / scale);
      worst = std::max(worst, std::abs(full[N + k] - a[ix(r)] * red[nr + i]) / scale);
    }
  }
  return worst;
}

/// Field on (q, p, tau) for integrate().
inline Field simulation_field(const TwistedSystem& sys) {
  return [&sys](double, std::span<const double> y, std::span<double> dy) {
    const std::size_t N = sys.dim();
    PhasePoint x = PhasePoint::from_flat(y, N);
    auto f = full_field(sys, x);
    std::copy(f.begin(), f.end(), dy.begin());
    Vector a = sys.alpha(x.q);
    for (std::size_t r = 0; r < sys.block_count(); ++r) dy[2 * N + r] = a[ix(r)];
  };
}

/// Integrates H from P0 over [t0, t1] with the block clocks appended.
inline Trajectory simulate(const TwistedSystem& sys, const PhasePoint& p0, double t0, double t1,
                           const IntegratorConfig& cfg = {}) {
  std::vector<double> y = p0.flat();
  y.resize(2 * sys.dim() + sys.block_count(), 0.0);
  return integrate(simulation_field(sys), std::move(y), t0, t1, cfg);
}

struct BlockClock {
  std::size_t block = 0;
  std::vector<double> t;
  std::vector<double> tau;
  bool sign_changed = false;
  std::optional<double> first_sign_change;  // time of the first zero of alpha^r
  double tau_min = 0.0;
  double tau_max = 0.0;
  const Trajectory* source = nullptr;  // dense output lives here
  std::size_t column = 0;

  double at(double time) const {
    return source->at(time)[column] - source->state(0)[column];
  }
};

/// tau_r along a trajectory produced by simulate(). Sign changes of alpha^r
/// are located on the dense output by bisection.
inline BlockClock block_clock(const TwistedSystem& sys, const Trajectory& tr, std::size_t r) {
  const std::size_t N = sys.dim();
  if (tr.dim() != 2 * N + sys.block_count())
    throw ModelError(ModelError::Kind::Dimension, "trajectory does not carry block clocks");
  if (r >= sys.block_count()) throw ModelError(ModelError::Kind::Index, "block index out of range");
  BlockClock clock;
  clock.block = r;
  clock.source = &tr;
  clock.column = 2 * N + r;
  const double tau0 = tr.state(0)[clock.column];
  auto alpha_at = [&](double t) {
    auto y = tr.at(t);
    return sys.alpha(std::span<const double>(y).first(N))[ix(r)];
  };
  double prev_alpha = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.times()[i];
    const double tau = tr.state(i)[clock.column] - tau0;
    clock.t.push_back(t);
    clock.tau.push_back(tau);
    clock.tau_min = std::min(clock.tau_min, tau);
    clock.tau_max = std::max(clock.tau_max, tau);
    const double a = sys.alpha(std::span<const double>(tr.state(i)).first(N))[ix(r)];
    if (i > 0 && !clock.sign_changed && ((a < 0) != (prev_alpha < 0)) && a != 0.0) {
      clock.sign_changed = true;
      double lo = tr.times()[i - 1], hi = t;
      double flo = prev_alpha;
      for (int it = 0; it < 80 && std::abs(hi - lo) > 1e-14 * std::max(1.0, std::abs(t)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = alpha_at(mid);
        if ((fm < 0) == (flo < 0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      clock.first_sign_change = 0.5 * (lo + hi);
    }
    prev_alpha = a;
  }
  // Extremes of tau sit at zeros of alpha^r, generally between steps.
  if (clock.sign_changed) {
    const std::size_t m = 20 * tr.size();
    for (std::size_t j = 0; j <= m; ++j) {
      const double t = tr.t_begin() + (tr.t_end() - tr.t_begin()) * double(j) / double(m);
      const double tau = clock.at(t);
      clock.tau_min = std::min(clock.tau_min, tau);
      clock.tau_max = std::max(clock.tau_max, tau);
    }
  }
  return clock;
}

/// What to do when alpha^r changes sign along the orbit.
enum class SignChangePolicy {
  FullSpan,         // reduced orbit integrated over the whole tau range (default)
  MonotoneSegment,  // restrict to the initial segment before the first zero
};

struct CompareOptions {
  IntegratorConfig integrator;
  std::size_t samples = 1000;  // matched samples; at least 500 are used
  SignChangePolicy policy = SignChangePolicy::FullSpan;
};

struct ComparisonReport {
  std::size_t block = 0;
  std::vector<std::string> components;  // e.g. q1, p1
  std::vector<double> sup;
  std::vector<double> rms;
  double sup_max = 0.0;
  double rms_max = 0.0;
  std::size_t samples = 0;
  double rtol = 0.0;
  double atol = 0.0;
  double t_end = 0.0;
  double tau_min = 0.0;
  double tau_max = 0.0;
  bool sign_changed = false;
  bool restricted = false;  // comparison cut at the first zero of alpha^r
  std::vector<double> constants;

  // Matched series for plotting: t, tau_r(t), full block state, reduced state.
  std::vector<double> t;
  std::vector<double> tau;
  std::vector<std::vector<double>> full;
  std::vector<std::vector<double>> reduced;
};

class ComparisonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reduced orbit of H~_r from `start` covering tau in [tau_lo, tau_hi]
/// (tau_lo <= 0 <= tau_hi), as two trajectories (backward, forward).
struct ReducedOrbit {
  std::optional<Trajectory> backward;
  std::optional<Trajectory> forward;
  std::vector<double> start;

  std::vector<double> at(double tau) const {
    if (tau > 0) return forward->at(tau);
    if (tau < 0) return backward->at(tau);
    return start;
  }
};

inline ReducedOrbit integrate_reduced(const TwistedSystem& sys, std::size_t r, std::span<const double> c,
                                      std::vector<double> start, double tau_lo, double tau_hi,
                                      const IntegratorConfig& cfg) {
  std::vector<double> cv(c.begin(), c.end());
  Field f = [&sys, r, cv](double, std::span<const double> y, std::span<double> dy) {
    auto v = reduced_field(sys, r, cv, y);
    std::copy(v.begin(), v.end(), dy.begin());
  };
  ReducedOrbit out;
  out.start = start;
  auto fw = tau_hi > 0 ? std::async(std::launch::async, [&] { return integrate(f, start, 0.0, tau_hi, cfg); })
                       : std::future<Trajectory>();
  if (tau_lo < 0) out.backward = integrate(f, start, 0.0, tau_lo, cfg);
  if (fw.valid()) out.forward = fw.get();
  return out;
}

/// Integrates H from P0 over [0, t_end], integrates H~_r over the tau_r
/// range reached, and compares the block projection with the reduced orbit
/// sampled at tau_r(t).
inline ComparisonReport compare_block_orbits(const TwistedSystem& sys, const PhasePoint& p0, std::size_t r,
                                             double t_end, const CompareOptions& opt = {}) {
  if (r >= sys.block_count()) throw ModelError(ModelError::Kind::Index, "block index out of range");
  const auto& st = sys.structure();
  const std::size_t nr = st.size(r);
  const Trajectory full = simulate(sys, p0, 0.0, t_end, opt.integrator);
  const BlockClock clock = block_clock(sys, full, r);

  ComparisonReport rep;
  rep.block = r;
  rep.rtol = opt.integrator.rtol;
  rep.atol = opt.integrator.atol;
  rep.sign_changed = clock.sign_changed;
  double t_stop = t_end;
  if (clock.sign_changed && opt.policy == SignChangePolicy::MonotoneSegment) {
    t_stop = *clock.first_sign_change;
    rep.restricted = true;
    if (!(std::abs(t_stop) > 0)) throw ComparisonError("empty monotone segment for block " + std::to_string(r + 1));
  }
  rep.t_end = t_stop;

  Vector c = sys.separation_constants(p0);
  rep.constants.assign(c.data(), c.data() + c.size());

  const std::size_t m = std::max<std::size_t>(opt.samples, 500);
  for (std::size_t j = 0; j <= m; ++j) {
    const double t = j == m ? t_stop : t_stop * double(j) / double(m);
    rep.t.push_back(t);
    rep.tau.push_back(clock.at(t));
  }
  rep.tau_min = *std::min_element(rep.tau.begin(), rep.tau.end());
  rep.tau_max = *std::max_element(rep.tau.begin(), rep.tau.end());
  if (!rep.restricted) {
    rep.tau_min = std::min(rep.tau_min, clock.tau_min);
    rep.tau_max = std::max(rep.tau_max, clock.tau_max);
  }
  // A small margin keeps every matched tau strictly inside the reduced span.
  const double pad = 1e-6 * std::max(1.0, rep.tau_max - rep.tau_min);
  ReducedOrbit red = integrate_reduced(sys, r, rep.constants, block_slice(sys, r, p0.flat()),
                                       rep.tau_min < 0 ? rep.tau_min - pad : 0.0,
                                       rep.tau_max > 0 ? rep.tau_max + pad : 0.0, opt.integrator);

  for (std::size_t i = 0; i < nr; ++i) rep.components.push_back(st.names()[st.offset(r) + i]);
  for (std::size_t i = 0; i < nr; ++i) rep.components.push_back(momentum_name(st.names()[st.offset(r) + i]));
  rep.sup.assign(2 * nr, 0.0);
  rep.rms.assign(2 * nr, 0.0);
  for (std::size_t j = 0; j < rep.t.size(); ++j) {
    auto fb = block_slice(sys, r, full.at(rep.t[j]));
    auto rb = red.at(rep.tau[j]);
    for (std::size_t k = 0; k < 2 * nr; ++k) {
      const double d = std::abs(fb[k] - rb[k]);
      rep.sup[k] = std::max(rep.sup[k], d);
      rep.rms[k] += d * d;
    }
    rep.full.push_back(std::move(fb));
    rep.reduced.push_back(std::move(rb));
  }
  rep.samples = rep.t.size();
  for (std::size_t k = 0; k < 2 * nr; ++k) {
    rep.rms[k] = std::sqrt(rep.rms[k] / double(rep.samples));
    rep.sup_max = std::max(rep.sup_max, rep.sup[k]);
    rep.rms_max = std::max(rep.rms_max, rep.rms[k]);
  }
  return rep;
}

/// Angular frequency of one component from its zero crossings on the dense
/// output (crossings refined by bisection).
inline double zero_crossing_frequency(const Trajectory& tr, std::size_t component) {
  std::vector<double> zeros;
  const auto& ts = tr.times();
  for (std::size_t i = 1; i < ts.size(); ++i) {
    // Refine inside each step on a fine grid so double crossings are not missed.
    constexpr int kSub = 8;
    double a = ts[i - 1];
    double fa = tr.state(i - 1)[component];
    for (int s = 1; s <= kSub; ++s) {
      const double b = s == kSub ? ts[i] : ts[i - 1] + (ts[i] - ts[i - 1]) * s / kSub;
      const double fb = s == kSub ? tr.state(i)[component] : tr.at(b)[component];
      if ((fa < 0) != (fb < 0) && fb != 0.0) {
        double lo = a, hi = b, flo = fa;
        for (int it = 0; it < 100 && std::abs(hi - lo) > 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(hi)); ++it) {
          const double mid = 0.5 * (lo + hi);
          const double fm = tr.at(mid)[component];
          if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        zeros.push_back(0.5 * (lo + hi));
      }
      a = b;
      fa = fb;
    }
  }
  if (zeros.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double half_period = (zeros.back() - zeros.front()) / double(zeros.size() - 1);
  return std::numbers::pi / std::abs(half_period);
}

}  // namespace bsep
