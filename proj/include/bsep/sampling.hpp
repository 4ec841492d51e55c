#pragma once

// Seeded uniform sampling in coordinate boxes with rejection of points that
// fall into declared singular sets.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsep {

using Point = std::vector<double>;
using Acceptor = std::function<bool(std::span<const double>)>;

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const { return lo.size(); }
  bool empty() const { return lo.empty(); }
};

inline constexpr std::uint64_t kDefaultSeed = 42;

/// `count` points drawn uniformly from `box`, skipping any the acceptor
/// rejects. Deterministic for a fixed seed.
inline std::vector<Point> sample_box(const Box& box, std::size_t count, std::uint64_t seed,
                                     const Acceptor& accept = {},
                                     std::size_t max_tries_per_point = 1000) {
  if (box.lo.size() != box.hi.size()) throw std::invalid_argument("sample_box: bounds differ in size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Point> out;
  out.reserve(count);
  std::size_t tries = 0;
  while (out.size() < count) {
    Point x(box.dim());
    for (std::size_t i = 0; i < box.dim(); ++i) x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * unit(rng);
    if (!accept || accept(x)) {
      out.push_back(std::move(x));
      tries = 0;
    } else if (++tries > max_tries_per_point) {
      throw std::runtime_error("sample_box: rejection sampling made no progress after " +
                               std::to_string(max_tries_per_point) + " tries");
    }
  }
  return out;
}

}  // namespace bsep
