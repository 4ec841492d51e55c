#pragma once

/**
 * @file integrator.hpp
 * @brief Dormand–Prince 5(4) with PI step-size control and dense output.
 *
 * Integration runs forward or backward (t1 < t0). Samples are stored in
 * integration order, so `t` is strictly monotone in the direction of
 * integration. Each accepted step keeps the coefficients of the quartic
 * continuous extension of Hairer & Wanner, so `at(t)` is available anywhere
 * inside the covered span.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsep {

/// dy/dt = f(t, y), written into `dy`.
using Field = std::function<void(double t, std::span<const double> y, std::span<double> dy)>;

struct IntegratorConfig {
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  double initial_step = 0.0;  // 0 selects automatically
  std::size_t max_steps = 5'000'000;
  double safety = 0.9;
  double min_ratio = 0.2;
  double max_ratio = 5.0;
  double beta = 0.04;  // PI feedback on the previous error
};

struct IntegrationStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
  double rtol = 0.0;
  double atol = 0.0;
};

class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::size_t dim, double t0, std::vector<double> y0) : dim_(dim) {
    t_.push_back(t0);
    y_.push_back(std::move(y0));
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return t_.size(); }
  const std::vector<double>& times() const { return t_; }
  const std::vector<double>& state(std::size_t i) const { return y_[i]; }
  const std::vector<std::vector<double>>& states() const { return y_; }
  double t_begin() const { return t_.front(); }
  double t_end() const { return t_.back(); }
  bool forward() const { return t_.size() < 2 || t_.back() > t_.front(); }
  const IntegrationStats& stats() const { return stats_; }

  bool covers(double t) const {
    const double lo = std::min(t_begin(), t_end());
    const double hi = std::max(t_begin(), t_end());
    return t >= lo && t <= hi;
  }

  /// Dense-output state at t (must lie inside the covered span).
  std::vector<double> at(double t) const {
    std::vector<double> out(dim_);
    at(t, out);
    return out;
  }

  void at(double t, std::span<double> out) const {
    if (!covers(t)) {
      throw std::out_of_range("trajectory: t = " + std::to_string(t) + " outside [" +
                              std::to_string(std::min(t_begin(), t_end())) + ", " +
                              std::to_string(std::max(t_begin(), t_end())) + "]");
    }
    if (t_.size() == 1) {
      std::copy(y_[0].begin(), y_[0].end(), out.begin());
      return;
    }
    // Segment i spans [t_i, t_{i+1}] in integration order.
    std::size_t i;
    if (forward()) {
      auto it = std::upper_bound(t_.begin(), t_.end(), t);
      i = it == t_.begin() ? 0 : std::size_t(it - t_.begin()) - 1;
    } else {
      auto it = std::upper_bound(t_.begin(), t_.end(), t, std::greater<>());
      i = it == t_.begin() ? 0 : std::size_t(it - t_.begin()) - 1;
    }
    i = std::min(i, t_.size() - 2);
    const double h = t_[i + 1] - t_[i];
    const double th = (t - t_[i]) / h;
    const double th1 = 1.0 - th;
    const double* r = dense_.data() + i * 5 * dim_;
    for (std::size_t k = 0; k < dim_; ++k) {
      const double* c = r + 5 * k;
      out[k] = c[0] + th * (c[1] + th1 * (c[2] + th * (c[3] + th1 * c[4])));
    }
  }

  /// `m` + 1 equally spaced dense samples over the covered span.
  std::vector<std::vector<double>> resample(std::size_t m, std::vector<double>* times = nullptr) const {
    std::vector<std::vector<double>> out;
    if (times) times->clear();
    for (std::size_t j = 0; j <= m; ++j) {
      double t = j == m ? t_end() : t_begin() + (t_end() - t_begin()) * double(j) / double(m);
      out.push_back(at(t));
      if (times) times->push_back(t);
    }
    return out;
  }

  /// Appends an accepted step with its dense coefficients (5 per component).
  void push(double t, std::vector<double> y, std::span<const double> coeffs) {
    t_.push_back(t);
    y_.push_back(std::move(y));
    dense_.insert(dense_.end(), coeffs.begin(), coeffs.end());
  }

  IntegrationStats& mutable_stats() { return stats_; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> t_;
  std::vector<std::vector<double>> y_;
  std::vector<double> dense_;  // per step, per component: r1..r5
  IntegrationStats stats_;
};

class IntegrationError : public std::runtime_error {
 public:
  enum class Kind { StepUnderflow, FieldFailure, TooManySteps };
  IntegrationError(Kind kind, double last_time, Trajectory partial, const std::string& what)
      : std::runtime_error(what), kind_(kind), last_time_(last_time), partial_(std::move(partial)) {}
  Kind kind() const { return kind_; }
  double last_good_time() const { return last_time_; }
  const Trajectory& partial() const { return partial_; }

 private:
  Kind kind_;
  double last_time_;
  Trajectory partial_;
};

namespace detail {

struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                          d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                          d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace detail

/// Integrates y' = f(t, y) from t0 to t1. Throws IntegrationError (carrying
/// the trajectory up to the last accepted step) on step-size underflow, a
/// throwing field, or the step budget running out.
inline Trajectory integrate(const Field& f, std::vector<double> y0, double t0, double t1,
                            const IntegratorConfig& cfg = {}) {
  using D = detail::Dopri5;
  if (!(t1 != t0)) throw std::invalid_argument("integrate: empty time span");
  if (!(cfg.rtol > 0) || !(cfg.atol >= 0)) throw std::invalid_argument("integrate: bad tolerances");
  const std::size_t n = y0.size();
  const double dir = t1 > t0 ? 1.0 : -1.0;

  Trajectory traj(n, t0, y0);
  auto& stats = traj.mutable_stats();
  stats.rtol = cfg.rtol;
  stats.atol = cfg.atol;

  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ys(n), y1(n), coeffs(5 * n);
  double t = t0;
  std::vector<double> y = std::move(y0);

  auto fail = [&](IntegrationError::Kind kind, const std::string& msg) {
    throw IntegrationError(kind, t, traj, msg + " at t = " + std::to_string(t));
  };
  auto eval = [&](double tt, std::span<const double> yy, std::span<double> out) -> bool {
    ++stats.evaluations;
    try {
      f(tt, yy, out);
    } catch (const std::exception& e) {
      fail(IntegrationError::Kind::FieldFailure, std::string("field evaluation failed: ") + e.what());
    }
    return detail::all_finite(out);
  };

  if (!eval(t, y, k1)) fail(IntegrationError::Kind::FieldFailure, "field not finite at the initial state");

  auto scale = [&](double a, double b) {
    return cfg.atol + cfg.rtol * std::max(std::abs(a), std::abs(b));
  };

  // Starting step (Hairer & Wanner, II.4).
  double h = cfg.initial_step;
  const double span = std::abs(t1 - t0);
  const double hmax = std::min(cfg.max_step, span);
  if (h <= 0) {
    double dnf = 0, dny = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double sk = scale(y[i], y[i]);
      dnf += (k1[i] / sk) * (k1[i] / sk);
      dny += (y[i] / sk) * (y[i] / sk);
    }
    h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + dir * h * k1[i];
    if (!eval(t + dir * h, ys, k2)) {
      h *= 1e-3;
    } else {
      double der2 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        double sk = scale(y[i], y[i]);
        der2 += ((k2[i] - k1[i]) / sk) * ((k2[i] - k1[i]) / sk);
      }
      der2 = std::sqrt(der2) / h;
      double der12 = std::max(std::abs(der2), std::sqrt(dnf));
      double h1 = der12 <= 1e-15 ? std::max(1e-6, std::abs(h) * 1e-3) : std::pow(0.01 / der12, 0.2);
      h = std::min({100 * std::abs(h), h1, hmax});
    }
  }
  h = std::min(h, hmax);

  const double expo1 = 0.2 - cfg.beta * 0.75;
  double facold = 1e-4;
  bool last_rejected = false;
  std::size_t steps = 0;

  while (dir * (t1 - t) > 0) {
    if (++steps > cfg.max_steps) fail(IntegrationError::Kind::TooManySteps, "step budget exhausted");
    if (h < 16 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)))
      fail(IntegrationError::Kind::StepUnderflow, "step size underflow");
    bool last = false;
    if (h >= dir * (t1 - t)) {
      h = dir * (t1 - t);
      last = true;
    }
    const double hs = dir * h;

    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + hs * D::a21 * k1[i];
    finite = finite && eval(t + D::c2 * hs, ys, k2);
    for (std::size_t i = 0; i < n && finite; ++i) ys[i] = y[i] + hs * (D::a31 * k1[i] + D::a32 * k2[i]);
    finite = finite && eval(t + D::c3 * hs, ys, k3);
    for (std::size_t i = 0; i < n && finite; ++i)
      ys[i] = y[i] + hs * (D::a41 * k1[i] + D::a42 * k2[i] + D::a43 * k3[i]);
    finite = finite && eval(t + D::c4 * hs, ys, k4);
    for (std::size_t i = 0; i < n && finite; ++i)
      ys[i] = y[i] + hs * (D::a51 * k1[i] + D::a52 * k2[i] + D::a53 * k3[i] + D::a54 * k4[i]);
    finite = finite && eval(t + D::c5 * hs, ys, k5);
    for (std::size_t i = 0; i < n && finite; ++i)
      ys[i] = y[i] + hs * (D::a61 * k1[i] + D::a62 * k2[i] + D::a63 * k3[i] + D::a64 * k4[i] +
                           D::a65 * k5[i]);
    finite = finite && eval(t + hs, ys, k6);
    for (std::size_t i = 0; i < n && finite; ++i)
      y1[i] = y[i] + hs * (D::a71 * k1[i] + D::a73 * k3[i] + D::a74 * k4[i] + D::a75 * k5[i] +
                           D::a76 * k6[i]);
    finite = finite && eval(t + hs, y1, k7);

    if (!finite) {
      // Treat a non-finite stage as a failed step and shrink hard.
      ++stats.rejected;
      h *= cfg.min_ratio;
      last_rejected = true;
      continue;
    }

    double err = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double e = hs * (D::e1 * k1[i] + D::e3 * k3[i] + D::e4 * k4[i] + D::e5 * k5[i] + D::e6 * k6[i] +
                       D::e7 * k7[i]);
      double sk = scale(y[i], y1[i]);
      err += (e / sk) * (e / sk);
    }
    err = n ? std::sqrt(err / double(n)) : 0.0;

    const double fac11 = std::pow(std::max(err, 1e-300), expo1);
    if (err <= 1.0) {
      double fac = fac11 / std::pow(facold, cfg.beta);
      fac = std::clamp(fac / cfg.safety, 1.0 / cfg.max_ratio, 1.0 / cfg.min_ratio);
      double hnew = h / fac;
      facold = std::max(err, 1e-4);

      for (std::size_t i = 0; i < n; ++i) {
        const double dy = y1[i] - y[i];
        const double bspl = hs * k1[i] - dy;
        double* c = coeffs.data() + 5 * i;
        c[0] = y[i];
        c[1] = dy;
        c[2] = bspl;
        c[3] = dy - hs * k7[i] - bspl;
        c[4] = hs * (D::d1 * k1[i] + D::d3 * k3[i] + D::d4 * k4[i] + D::d5 * k5[i] + D::d6 * k6[i] +
                     D::d7 * k7[i]);
      }
      t = last ? t1 : t + hs;
      y = y1;
      traj.push(t, y, coeffs);
      ++stats.accepted;
      std::swap(k1, k7);
      if (last_rejected) hnew = std::min(hnew, h);
      last_rejected = false;
      h = std::min(hnew, hmax);
    } else {
      ++stats.rejected;
      h = h / std::min(1.0 / cfg.min_ratio, fac11 / cfg.safety);
      last_rejected = true;
    }
  }
  return traj;
}

}  // namespace bsep
