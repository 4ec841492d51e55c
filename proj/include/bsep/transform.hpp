#pragma once

/**
 * @file transform.hpp
 * @brief Point transformations lifted to phase space.
 *
 * A stage maps old coordinates x to new coordinates y. It is given by the
 * explicit map y -> x (expressions, so the Jacobian J = dx/dy comes from
 * AD) and a built-in inverse x -> y. Momenta transform as p_y = J^T p_x,
 * and back by a linear solve with J^T. Stages compose left to right.
 */

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsep/expr.hpp"
#include "bsep/linalg.hpp"
#include "bsep/model.hpp"

namespace bsep {

class TransformStage {
 public:
  using Inverse = std::function<std::vector<double>(std::span<const double> x)>;

  /// `to_old[i]` expresses x^i in terms of the new coordinates `new_names`.
  TransformStage(std::string label, const std::vector<std::string>& to_old, std::vector<std::string> new_names,
                 Inverse to_new)
      : label_(std::move(label)), names_(std::move(new_names)), to_new_(std::move(to_new)) {
    for (const auto& s : to_old) progs_.emplace_back(parse(s), names_);
    if (progs_.size() != names_.size()) throw std::invalid_argument("transform stage must be square");
  }

  const std::string& label() const { return label_; }
  std::size_t dim() const { return names_.size(); }

  std::vector<double> to_old(std::span<const double> y) const {
    std::vector<double> x(dim());
    for (std::size_t i = 0; i < dim(); ++i) x[i] = progs_[i].value(y);
    return x;
  }
  std::vector<double> to_new(std::span<const double> x) const { return to_new_(x); }

  /// J(i, j) = d x^i / d y^j.
  Matrix jacobian(std::span<const double> y) const {
    Matrix j = Matrix::Zero(ix(dim()), ix(dim()));
    for (std::size_t i = 0; i < dim(); ++i)
      for (std::size_t k : progs_[i].used_slots()) j(ix(i), ix(k)) = progs_[i].derivative(y, k);
    return j;
  }

 private:
  std::string label_;
  std::vector<std::string> names_;
  std::vector<Program> progs_;
  Inverse to_new_;
};

class CanonicalTransform {
 public:
  CanonicalTransform() = default;
  explicit CanonicalTransform(std::vector<TransformStage> stages) : stages_(std::move(stages)) {}

  std::size_t dim() const { return stages_.empty() ? 0 : stages_.front().dim(); }
  const std::vector<TransformStage>& stages() const { return stages_; }

  /// Old -> new positions.
  std::vector<double> positions(std::span<const double> x) const {
    std::vector<double> y(x.begin(), x.end());
    for (const auto& s : stages_) y = s.to_new(y);
    return y;
  }

  /// New -> old positions.
  std::vector<double> inverse_positions(std::span<const double> y) const {
    std::vector<double> x(y.begin(), y.end());
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) x = it->to_old(x);
    return x;
  }

  /// Jacobian dx/dy of the composite, chained across stages.
  Matrix jacobian(std::span<const double> y) const {
    const std::size_t n = dim();
    Matrix j = Matrix::Identity(ix(n), ix(n));
    std::vector<double> cur(y.begin(), y.end());
    // Walk from the last stage back to the first, accumulating dx/dy.
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
      j = it->jacobian(cur) * j;
      cur = it->to_old(cur);
    }
    return j;
  }

  PhasePoint forward(const PhasePoint& old) const {
    PhasePoint out;
    out.q = positions(old.q);
    const Matrix j = jacobian(out.q);
    const Vector p = j.transpose() * Eigen::Map<const Vector>(old.p.data(), ix(old.p.size()));
    out.p.assign(p.data(), p.data() + p.size());
    return out;
  }

  PhasePoint backward(const PhasePoint& nw) const {
    PhasePoint out;
    out.q = inverse_positions(nw.q);
    const Matrix j = jacobian(nw.q);
    const Vector p = j.transpose().partialPivLu().solve(Eigen::Map<const Vector>(nw.p.data(), ix(nw.p.size())));
    out.p.assign(p.data(), p.data() + p.size());
    return out;
  }

 private:
  std::vector<TransformStage> stages_;
};

}  // namespace bsep
