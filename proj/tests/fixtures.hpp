#pragma once

// Seeded phase-point generators shared by the test suites.

#include <vector>

#include "bsep/catalog.hpp"

namespace fixture {

/// Positions from the entry's sampler, momenta uniform in [-1, 1].
inline std::vector<bsep::PhasePoint> phase_points(const bsep::CatalogEntry& e, std::size_t count,
                                                  std::uint64_t seed = 42) {
  return e.sample_phase(count, seed);
}

/// Twisted oscillators used across suites.
inline bsep::CatalogEntry oscillators3() { return bsep::oscillators({1.0, 1.5, 0.7}, {0.8, 1.2, 2.0}); }

}  // namespace fixture
