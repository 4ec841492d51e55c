#pragma once

/**
 * @file model.hpp
 * @brief Block structures, block-Stäckel matrices and twisted Hamiltonians.
 *
 * A TwistedSystem couples n natural Hamiltonians
 *
 *     H_r = 1/2 g_r^{ij} p_i p_j + V_r        (block r coordinates only)
 *
 * through an invertible n x n matrix S whose row r depends only on block r.
 * With alpha^r = (S^{-1})[0][r] the twisted Hamiltonian is H = alpha^r H_r
 * and the remaining rows give the first integrals K_a = (S^{-1})[a][r] H_r.
 *
 * Indices in this API are zero-based: block r in [0, n), integral a in
 * [0, n) where a = 0 is H itself.
 */

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsep/expr.hpp"
#include "bsep/linalg.hpp"
#include "bsep/sampling.hpp"

namespace bsep {

class ModelError : public std::runtime_error {
 public:
  enum class Kind { Dimension, ForeignVariable, UnknownVariable, Singular, Degenerate, Index };
  ModelError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class BlockStructure {
 public:
  BlockStructure() = default;

  /// Names default to q1..qN in block-major order.
  explicit BlockStructure(std::vector<std::size_t> sizes, std::vector<std::string> names = {})
      : sizes_(std::move(sizes)), names_(std::move(names)) {
    if (sizes_.empty()) throw ModelError(ModelError::Kind::Dimension, "block structure has no blocks");
    std::size_t total = 0;
    for (std::size_t r = 0; r < sizes_.size(); ++r) {
      if (sizes_[r] == 0)
        throw ModelError(ModelError::Kind::Dimension, "block " + std::to_string(r + 1) + " has size 0");
      offsets_.push_back(total);
      for (std::size_t i = 0; i < sizes_[r]; ++i) {
        block_of_.push_back(r);
        local_.push_back(i);
      }
      total += sizes_[r];
    }
    if (names_.empty()) {
      for (std::size_t k = 0; k < total; ++k) names_.push_back("q" + std::to_string(k + 1));
    }
    if (names_.size() != total) {
      throw ModelError(ModelError::Kind::Dimension, "expected " + std::to_string(total) +
                                                        " coordinate names, got " +
                                                        std::to_string(names_.size()));
    }
    for (std::size_t i = 0; i < names_.size(); ++i)
      for (std::size_t j = i + 1; j < names_.size(); ++j)
        if (names_[i] == names_[j])
          throw ModelError(ModelError::Kind::Dimension, "duplicate coordinate name '" + names_[i] + "'");
  }

  std::size_t blocks() const { return sizes_.size(); }
  std::size_t dim() const { return names_.size(); }
  std::size_t size(std::size_t r) const { return sizes_[r]; }
  std::size_t offset(std::size_t r) const { return offsets_[r]; }
  std::size_t block_of(std::size_t k) const { return block_of_[k]; }
  std::size_t local_index(std::size_t k) const { return local_[k]; }
  std::size_t global(std::size_t r, std::size_t i) const { return offsets_[r] + i; }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  const std::vector<std::string>& names() const { return names_; }
  std::span<const std::string> block_names(std::size_t r) const {
    return std::span<const std::string>(names_).subspan(offsets_[r], sizes_[r]);
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::string> names_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> block_of_;
  std::vector<std::size_t> local_;
};

/// n x n grid of expressions; entry (r, a) multiplies c_a in block r's
/// separated equation H_r = S(r, a) c_a.
class StackelMatrix {
 public:
  StackelMatrix() = default;
  explicit StackelMatrix(std::vector<std::vector<Expression>> rows) : rows_(std::move(rows)) {
    for (const auto& row : rows_)
      if (row.size() != rows_.size())
        throw ModelError(ModelError::Kind::Dimension, "Stäckel matrix is not square");
  }

  static StackelMatrix from_strings(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::vector<Expression>> out;
    for (const auto& row : rows) {
      std::vector<Expression> r;
      for (const auto& s : row) r.push_back(parse(s));
      out.push_back(std::move(r));
    }
    return StackelMatrix(std::move(out));
  }

  std::size_t size() const { return rows_.size(); }
  const Expression& at(std::size_t r, std::size_t a) const { return rows_[r][a]; }
  const std::vector<std::vector<Expression>>& rows() const { return rows_; }

 private:
  std::vector<std::vector<Expression>> rows_;
};

/// Contravariant block metric g_r^{ij} (stored as its upper triangle) and
/// block potential V_r.
class NaturalBlock {
 public:
  NaturalBlock() = default;

  /// `metric` may be a full square grid (then (i,j) and (j,i) must render
  /// identically) or the upper triangle given row by row.
  NaturalBlock(const std::vector<std::vector<Expression>>& metric, Expression potential)
      : size_(metric.size()), potential_(std::move(potential)) {
    for (std::size_t i = 0; i < size_; ++i) {
      const bool full = metric[i].size() == size_;
      const bool upper = metric[i].size() == size_ - i;
      if (!full && !upper)
        throw ModelError(ModelError::Kind::Dimension, "block metric row " + std::to_string(i + 1) +
                                                          " has the wrong length");
      for (std::size_t j = i; j < size_; ++j) upper_.push_back(metric[i][full ? j : j - i]);
      if (full) {
        for (std::size_t j = 0; j < i; ++j) {
          if (metric[i][j].to_string() != metric[j][i].to_string())
            throw ModelError(ModelError::Kind::Dimension,
                             "block metric is not symmetric at (" + std::to_string(i + 1) + "," +
                                 std::to_string(j + 1) + ")");
        }
      }
    }
  }

  static NaturalBlock from_strings(const std::vector<std::vector<std::string>>& metric,
                                   const std::string& potential) {
    std::vector<std::vector<Expression>> m;
    for (const auto& row : metric) {
      std::vector<Expression> r;
      for (const auto& s : row) r.push_back(parse(s));
      m.push_back(std::move(r));
    }
    return NaturalBlock(m, parse(potential));
  }

  std::size_t size() const { return size_; }
  const Expression& metric(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return upper_[i * size_ - i * (i - 1) / 2 + (j - i)];
  }
  const Expression& potential() const { return potential_; }

 private:
  std::size_t size_ = 0;
  std::vector<Expression> upper_;
  Expression potential_;
};

struct PhasePoint {
  std::vector<double> q;
  std::vector<double> p;

  std::size_t dim() const { return q.size(); }

  std::vector<double> flat() const {
    std::vector<double> y(q);
    y.insert(y.end(), p.begin(), p.end());
    return y;
  }
  static PhasePoint from_flat(std::span<const double> y, std::size_t n) {
    return {std::vector<double>(y.begin(), y.begin() + static_cast<long>(n)),
            std::vector<double>(y.begin() + static_cast<long>(n), y.begin() + static_cast<long>(2 * n))};
  }
};

struct ProbeSpec {
  std::vector<Point> points;
  Box box;
  std::size_t samples = 20;
  std::uint64_t seed = kDefaultSeed;
};

struct TwistRows {
  Matrix inverse;  // row a holds the coefficients of K_a
  double condition = 0.0;
  bool ill_conditioned = false;
};

class TwistedSystem;

TwistedSystem build_system(BlockStructure structure, StackelMatrix stackel,
                           std::vector<NaturalBlock> blocks, ProbeSpec probes = {},
                           std::optional<StackelMatrix> twist_stackel = std::nullopt);

class TwistedSystem {
 public:
  const BlockStructure& structure() const { return structure_; }
  const StackelMatrix& stackel() const { return stackel_; }
  /// Matrix whose first inverse row defines H; equals stackel() unless a
  /// separate candidate matrix was supplied for the integrals.
  const StackelMatrix& twist_stackel() const { return twist_stackel_ ? *twist_stackel_ : stackel_; }
  bool has_candidate_stackel() const { return twist_stackel_.has_value(); }
  const std::vector<NaturalBlock>& blocks() const { return blocks_; }
  const std::vector<Point>& probe_points() const { return probe_points_; }

  std::size_t dim() const { return structure_.dim(); }
  std::size_t block_count() const { return structure_.blocks(); }

  // --- Stäckel matrix and its inverse -----------------------------------

  /// Jet of S (or of the twist matrix). Only partials along block r are
  /// nonzero in row r.
  MatJet stackel_jet(std::span<const double> q, int order, bool twist = false) const {
    const std::size_t n = block_count();
    const auto& progs = twist && twist_stackel_ ? twist_progs_ : stackel_progs_;
    MatJet out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), dim(), order);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t off = structure_.offset(r);
      const std::size_t nr = structure_.size(r);
      for (std::size_t a = 0; a < n; ++a) {
        const Program& prog = progs[r * n + a];
        out.value(ix(r), ix(a)) = prog.value(q);
        if (prog.used_slots().empty()) continue;
        if (order >= 1)
          for (std::size_t i = 0; i < nr; ++i)
            out.grad[off + i](ix(r), ix(a)) = prog.derivative(q, off + i);
        if (order >= 2)
          for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = i; j < nr; ++j) {
              double h = prog.second_derivative(q, off + i, off + j);
              out.dd(off + i, off + j)(ix(r), ix(a)) = h;
              out.dd(off + j, off + i)(ix(r), ix(a)) = h;
            }
      }
    }
    return out;
  }

  /// S^{-1} at q (LU with partial pivoting, 1-norm condition attached).
  TwistRows twist_rows(std::span<const double> q) const {
    Inverse inv = invert(stackel_jet(q, 0).value);
    return {inv.value, inv.condition, inv.ill_conditioned};
  }

  /// Jet of S^{-1} for the integrals' matrix.
  InverseJet inverse_jet(std::span<const double> q, int order) const {
    return inverse(stackel_jet(q, order, false));
  }

  /// Jet of the twist functions' matrix inverse (row 0 is alpha).
  InverseJet twist_inverse_jet(std::span<const double> q, int order) const {
    if (!twist_stackel_) return inverse_jet(q, order);
    return inverse(stackel_jet(q, order, true));
  }

  /// Twist functions alpha^r(q).
  Vector alpha(std::span<const double> q) const {
    const auto& progs = twist_stackel_ ? twist_progs_ : stackel_progs_;
    const std::size_t n = block_count();
    Matrix s(ix(n), ix(n));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t a = 0; a < n; ++a) s(ix(r), ix(a)) = progs[r * n + a].value(q);
    return invert(s).value.row(0).transpose();
  }

  // --- Block Hamiltonians ------------------------------------------------

  Matrix block_metric(std::size_t r, std::span<const double> q) const {
    const std::size_t nr = structure_.size(r);
    Matrix g(ix(nr), ix(nr));
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = i; j < nr; ++j) {
        double v = metric_progs_[r][i * nr + j].value(q);
        g(ix(i), ix(j)) = v;
        g(ix(j), ix(i)) = v;
      }
    return g;
  }

  /// Metric jet of block r as an n_r x n_r matrix jet over all N variables.
  MatJet block_metric_jet(std::size_t r, std::span<const double> q, int order) const {
    const std::size_t nr = structure_.size(r);
    const std::size_t off = structure_.offset(r);
    MatJet out(ix(nr), ix(nr), dim(), order);
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = i; j < nr; ++j) {
        const Program& prog = metric_progs_[r][i * nr + j];
        auto put = [&](Matrix& m, double v) {
          m(ix(i), ix(j)) = v;
          m(ix(j), ix(i)) = v;
        };
        put(out.value, prog.value(q));
        if (prog.used_slots().empty()) continue;
        if (order >= 1)
          for (std::size_t k = 0; k < nr; ++k) put(out.grad[off + k], prog.derivative(q, off + k));
        if (order >= 2)
          for (std::size_t k = 0; k < nr; ++k)
            for (std::size_t l = k; l < nr; ++l) {
              double h = prog.second_derivative(q, off + k, off + l);
              put(out.dd(off + k, off + l), h);
              put(out.dd(off + l, off + k), h);
            }
      }
    return out;
  }

  /// Potential V_r as a jet over all N variables.
  Jet potential_jet(std::size_t r, std::span<const double> q, int order) const {
    const Program& prog = potential_progs_[r];
    Jet out = Jet::zero(dim());
    out.value = prog.value(q);
    const std::size_t off = structure_.offset(r);
    const std::size_t nr = structure_.size(r);
    if (prog.used_slots().empty()) return out;
    if (order >= 1)
      for (std::size_t k = 0; k < nr; ++k) out.grad[ix(off + k)] = prog.derivative(q, off + k);
    if (order >= 2)
      for (std::size_t k = 0; k < nr; ++k)
        for (std::size_t l = k; l < nr; ++l) {
          double h = prog.second_derivative(q, off + k, off + l);
          out.hess(ix(off + k), ix(off + l)) = h;
          out.hess(ix(off + l), ix(off + k)) = h;
        }
    return out;
  }

  double block_potential(std::size_t r, std::span<const double> q) const {
    return potential_progs_[r].value(q);
  }

  /// H_r on block r's slice of the point.
  double block_energy(std::size_t r, const PhasePoint& x) const {
    check_block(r);
    const std::size_t off = structure_.offset(r);
    const std::size_t nr = structure_.size(r);
    Matrix g = block_metric(r, x.q);
    double kinetic = 0.0;
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = 0; j < nr; ++j) kinetic += g(ix(i), ix(j)) * x.p[off + i] * x.p[off + j];
    return 0.5 * kinetic + block_potential(r, x.q);
  }

  Vector block_energies(const PhasePoint& x) const {
    Vector h(ix(block_count()));
    for (std::size_t r = 0; r < block_count(); ++r) h[ix(r)] = block_energy(r, x);
    return h;
  }

  /// H = alpha^r H_r.
  double hamiltonian(const PhasePoint& x) const { return alpha(x.q).dot(block_energies(x)); }

  /// K_a = (S^{-1})[a][r] H_r; a = 0 gives H.
  double first_integral(std::size_t a, const PhasePoint& x) const {
    if (a >= block_count())
      throw ModelError(ModelError::Kind::Index, "first integral index " + std::to_string(a) +
                                                    " out of range for " + std::to_string(block_count()) +
                                                    " blocks");
    if (a == 0) return hamiltonian(x);
    return twist_rows(x.q).inverse.row(ix(a)).dot(block_energies(x));
  }

  /// c_0 = H(P), c_a = K_a(P).
  Vector separation_constants(const PhasePoint& x) const {
    Vector h = block_energies(x);
    Vector c = twist_rows(x.q).inverse * h;
    c[0] = alpha(x.q).dot(h);
    return c;
  }

  /// Row r of S evaluated on block r coordinates.
  Vector stackel_row(std::size_t r, std::span<const double> q) const {
    const std::size_t n = block_count();
    Vector row(ix(n));
    for (std::size_t a = 0; a < n; ++a) row[ix(a)] = stackel_progs_[r * n + a].value(q);
    return row;
  }

  /// H~_r = H_r - c_a S(r, a).
  double reduced_hamiltonian(std::size_t r, std::span<const double> c, const PhasePoint& x) const {
    check_block(r);
    if (c.size() != block_count())
      throw ModelError(ModelError::Kind::Dimension, "separation constants have the wrong length");
    Vector row = stackel_row(r, x.q);
    double shift = 0.0;
    for (std::size_t a = 0; a < c.size(); ++a) shift += c[a] * row[ix(a)];
    return block_energy(r, x) - shift;
  }

  /// Global coordinate vector with only block r filled in (others NaN).
  std::vector<double> embed_block(std::size_t r, std::span<const double> block_q) const {
    std::vector<double> q(dim(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < structure_.size(r); ++i) q[structure_.offset(r) + i] = block_q[i];
    return q;
  }

  const Program& stackel_program(std::size_t r, std::size_t a) const {
    return stackel_progs_[r * block_count() + a];
  }
  const Program& metric_program(std::size_t r, std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return metric_progs_[r][i * structure_.size(r) + j];
  }
  const Program& potential_program(std::size_t r) const { return potential_progs_[r]; }

 private:
  friend TwistedSystem build_system(BlockStructure, StackelMatrix, std::vector<NaturalBlock>,
                                    ProbeSpec, std::optional<StackelMatrix>);

  void check_block(std::size_t r) const {
    if (r >= block_count())
      throw ModelError(ModelError::Kind::Index, "block index " + std::to_string(r) + " out of range");
  }

  BlockStructure structure_;
  StackelMatrix stackel_;
  std::optional<StackelMatrix> twist_stackel_;
  std::vector<NaturalBlock> blocks_;
  std::vector<Point> probe_points_;

  std::vector<Program> stackel_progs_;
  std::vector<Program> twist_progs_;
  std::vector<std::vector<Program>> metric_progs_;  // [r][i * n_r + j], upper triangle
  std::vector<Program> potential_progs_;
};

namespace detail {

inline std::string format_point(std::span<const double> q) {
  std::string s = "(";
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (i) s += ", ";
    s += format_number(q[i]);
  }
  return s + ")";
}

inline void check_block_vars(const Expression& e, const BlockStructure& st, std::size_t r,
                             const std::string& what) {
  auto own = st.block_names(r);
  for (const auto& v : e.free_variables()) {
    if (std::find(own.begin(), own.end(), v) != own.end()) continue;
    const auto& all = st.names();
    if (std::find(all.begin(), all.end(), v) == all.end()) {
      throw ModelError(ModelError::Kind::UnknownVariable,
                       what + " '" + e.source() + "' references unknown variable '" + v + "'");
    }
    throw ModelError(ModelError::Kind::ForeignVariable,
                     what + " '" + e.source() + "' references '" + v + "' from outside block " +
                         std::to_string(r + 1));
  }
}

inline void check_stackel_rows(const StackelMatrix& s, const BlockStructure& st, const char* label) {
  if (s.size() != st.blocks())
    throw ModelError(ModelError::Kind::Dimension,
                     std::string(label) + " is " + std::to_string(s.size()) + "x" +
                         std::to_string(s.size()) + " but there are " + std::to_string(st.blocks()) +
                         " blocks");
  for (std::size_t r = 0; r < s.size(); ++r)
    for (std::size_t a = 0; a < s.size(); ++a)
      check_block_vars(s.at(r, a), st, r,
                       std::string(label) + " entry (" + std::to_string(r + 1) + "," +
                           std::to_string(a + 1) + ")");
}

}  // namespace detail

/// Validates and compiles a twisted system. Structural checks first
/// (dimensions, block-local dependence), then numeric checks at the probe
/// points: declared points plus `probes.samples` seeded draws from the box.
inline TwistedSystem build_system(BlockStructure structure, StackelMatrix stackel,
                                  std::vector<NaturalBlock> blocks, ProbeSpec probes,
                                  std::optional<StackelMatrix> twist_stackel) {
  const std::size_t n = structure.blocks();
  detail::check_stackel_rows(stackel, structure, "Stäckel");
  if (twist_stackel) detail::check_stackel_rows(*twist_stackel, structure, "twist Stäckel");
  if (blocks.size() != n)
    throw ModelError(ModelError::Kind::Dimension, "expected " + std::to_string(n) +
                                                      " natural blocks, got " + std::to_string(blocks.size()));
  for (std::size_t r = 0; r < n; ++r) {
    if (blocks[r].size() != structure.size(r))
      throw ModelError(ModelError::Kind::Dimension,
                       "block " + std::to_string(r + 1) + " metric is " + std::to_string(blocks[r].size()) +
                           "x" + std::to_string(blocks[r].size()) + " but the block has " +
                           std::to_string(structure.size(r)) + " coordinates");
    for (std::size_t i = 0; i < blocks[r].size(); ++i)
      for (std::size_t j = i; j < blocks[r].size(); ++j)
        detail::check_block_vars(blocks[r].metric(i, j), structure, r,
                                 "block " + std::to_string(r + 1) + " metric entry (" +
                                     std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
    detail::check_block_vars(blocks[r].potential(), structure, r,
                             "block " + std::to_string(r + 1) + " potential");
  }

  TwistedSystem sys;
  const auto& names = structure.names();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t a = 0; a < n; ++a) {
      sys.stackel_progs_.emplace_back(stackel.at(r, a), names);
      if (twist_stackel) sys.twist_progs_.emplace_back(twist_stackel->at(r, a), names);
    }
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t nr = structure.size(r);
    std::vector<Program> g(nr * nr);
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = i; j < nr; ++j) g[i * nr + j] = Program(blocks[r].metric(i, j), names);
    sys.metric_progs_.push_back(std::move(g));
    sys.potential_progs_.emplace_back(blocks[r].potential(), names);
  }
  sys.structure_ = std::move(structure);
  sys.stackel_ = std::move(stackel);
  sys.twist_stackel_ = std::move(twist_stackel);
  sys.blocks_ = std::move(blocks);

  std::vector<Point> pts = probes.points;
  if (!probes.box.empty() && probes.samples > 0) {
    if (probes.box.dim() != sys.dim())
      throw ModelError(ModelError::Kind::Dimension, "probe box dimension does not match the system");
    auto drawn = sample_box(probes.box, probes.samples, probes.seed);
    pts.insert(pts.end(), drawn.begin(), drawn.end());
  }
  for (const auto& q : pts) {
    if (q.size() != sys.dim())
      throw ModelError(ModelError::Kind::Dimension, "probe point has the wrong dimension");
    try {
      (void)invert(sys.stackel_jet(q, 0).value);
      if (sys.twist_stackel_) (void)invert(sys.stackel_jet(q, 0, true).value);
    } catch (const SingularMatrixError& e) {
      throw ModelError(ModelError::Kind::Singular,
                       std::string("Stäckel matrix singular at probe point ") + detail::format_point(q) +
                           ": " + e.what());
    }
    for (std::size_t r = 0; r < n; ++r) {
      try {
        (void)invert(sys.block_metric(r, q));
      } catch (const SingularMatrixError&) {
        throw ModelError(ModelError::Kind::Degenerate, "block " + std::to_string(r + 1) +
                                                           " metric degenerate at probe point " +
                                                           detail::format_point(q));
      }
    }
  }
  sys.probe_points_ = std::move(pts);
  return sys;
}

/// Same Hamiltonian (twist functions from the current matrix), but first
/// integrals taken from `candidate`. Used to test whether a proposed matrix
/// really separates a given H.
inline TwistedSystem with_candidate_stackel(const TwistedSystem& sys, StackelMatrix candidate) {
  ProbeSpec probes;
  probes.points = sys.probe_points();
  probes.samples = 0;
  return build_system(sys.structure(), std::move(candidate), sys.blocks(), probes, sys.twist_stackel());
}

}  // namespace bsep
