#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bsep/catalog.hpp"
#include "bsep/dynamics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bsep;

namespace {

TwistedSystem decoupled_system() {
  auto s = StackelMatrix::from_strings({{"1", "0"}, {"0", "1"}});
  std::vector<NaturalBlock> blocks{NaturalBlock::from_strings({{"1"}}, "0.5*q1^2 + 0.1*q1^4"),
                                   NaturalBlock::from_strings({{"1", "0"}, {"0", "1 + q3^2"}}, "q2*q3")};
  return build_system(BlockStructure({1, 2}), s, blocks, {}, std::nullopt);
}

}  // namespace

TEST(FullField, SingleOscillatorAtTurningPoint) {
  auto e = oscillators({1.0}, {1.0});
  auto f = full_field(*e.system, PhasePoint{{1.0}, {0.0}});
  EXPECT_NEAR(f[0], 0.0, 1e-15);
  EXPECT_NEAR(f[1], -1.0, 1e-15);
}

TEST(FullField, PendulaMatchesFiniteDifferenceOfH) {
  auto e = pendula();
  const auto& sys = *e.system;
  const std::size_t N = sys.dim();
  oracle::Fn h = [&](const std::vector<double>& y) { return sys.hamiltonian(PhasePoint::from_flat(y, N)); };
  for (const auto& x : fixture::phase_points(e, 20, 7)) {
    auto f = full_field(sys, x);
    auto y = x.flat();
    for (std::size_t k = 0; k < N; ++k) {
      EXPECT_NEAR(f[k], oracle::fd_first(h, y, N + k), 1e-7);
      EXPECT_NEAR(f[N + k], -oracle::fd_first(h, y, k), 1e-7);
    }
  }
}

TEST(FullField, BlockProportionalityAtInitialPoint) {
  auto e = pendula();
  EXPECT_LE(vector_field_identity_residual(*e.system, e.initial), 1e-10);
}

TEST(FullField, SingularStackelMatrixIsReported) {
  auto s = StackelMatrix::from_strings({{"q1", "1"}, {"0", "1"}});
  std::vector<NaturalBlock> blocks{NaturalBlock::from_strings({{"1"}}, "0"),
                                   NaturalBlock::from_strings({{"1"}}, "0")};
  auto sys = build_system(BlockStructure({1, 1}), s, blocks, {}, std::nullopt);
  EXPECT_ANY_THROW(full_field(sys, PhasePoint{{0.0, 0.3}, {1.0, 1.0}}));
}

TEST(VectorFieldIdentity, HoldsAtSeededPointsForCatalogSystems) {
  for (const auto& e : {pendula(), fixture::oscillators3(), calogero4()}) {
    double worst = 0.0;
    for (const auto& x : fixture::phase_points(e, 1000, 11)) worst = std::max(worst, vector_field_identity_residual(*e.system, x));
    EXPECT_LE(worst, 1e-9) << e.name;
  }
}

TEST(ReducedField, PendulumBlockWithZeroConstants) {
  auto e = pendula();
  const std::vector<double> c{0.0, 0.0, 0.0};
  for (double q : {-0.3, 0.1, 0.25}) {
    auto v = reduced_field(*e.system, 0, c, std::vector<double>{q, 0.7});
    EXPECT_DOUBLE_EQ(v[0], 0.7);
    EXPECT_NEAR(v[1], -0.5 * std::sin(q), 1e-15);
  }
}

TEST(ReducedField, ConstantStackelRowsAddNoForce) {
  auto e = fixture::oscillators3();
  const std::vector<double> zero{0.0, 0.0, 0.0}, c{1.3, -0.4, 2.2};
  for (std::size_t r = 0; r < 3; ++r) {
    auto a = reduced_field(*e.system, r, zero, std::vector<double>{0.4, -0.2});
    auto b = reduced_field(*e.system, r, c, std::vector<double>{0.4, -0.2});
    EXPECT_EQ(a, b);
  }
}

TEST(ReducedField, PendulaShiftedForceAgainstFiniteDifference) {
  auto e = pendula();
  const auto& sys = *e.system;
  Vector cv = sys.separation_constants(e.initial);
  std::vector<double> c(cv.data(), cv.data() + cv.size());
  const double q = 0.2;
  auto v = reduced_field(sys, 0, c, std::vector<double>{q, 0.0});
  // closed form: -d/dq (-(1/2) cos q - c2 (1 + q) - c3 (2 q^2 + 2))
  EXPECT_NEAR(v[1], -0.5 * std::sin(q) + c[1] + 4 * c[2] * q, 1e-12);
  oracle::Fn h = [&](const std::vector<double>& y) {
    return sys.reduced_hamiltonian(0, c, PhasePoint{{y[0], e.initial.q[1], e.initial.q[2]}, {y[1], 0.0, 0.0}});
  };
  EXPECT_NEAR(v[1], -oracle::fd_first(h, {q, 0.0}, 0), 1e-9);
  EXPECT_THROW(reduced_field(sys, 0, std::vector<double>{1.0}, std::vector<double>{q, 0.0}), ModelError);
  EXPECT_THROW(reduced_field(sys, 3, c, std::vector<double>{q, 0.0}), ModelError);
}

TEST(Simulate, TwistedOscillatorsFollowClosedForm) {
  auto e = fixture::oscillators3();
  const auto& sys = *e.system;
  double period = 0.0;
  const std::vector<double> w{1.0, 1.5, 0.7}, a{0.8, 1.2, 2.0};
  for (std::size_t i = 0; i < 3; ++i) period = std::max(period, 2 * std::numbers::pi / (a[i] * w[i]));
  auto tr = simulate(sys, e.initial, 0.0, period);
  double worst = 0.0;
  for (std::size_t j = 0; j <= 2000; ++j) {
    const double t = period * double(j) / 2000;
    auto y = tr.at(t);
    auto ref = e.closed_form(e.initial, t);
    for (std::size_t i = 0; i < 3; ++i) {
      worst = std::max(worst, std::abs(y[i] - ref.q[i]));
      worst = std::max(worst, std::abs(y[3 + i] - ref.p[i]));
    }
  }
  EXPECT_LE(worst, 1e-7);
}

TEST(Simulate, CommonFrequencyWhenAlphaIsInverseOmega) {
  const double k = 1.7;
  const std::vector<double> w{0.5, 1.0, 2.5};
  auto e = oscillators(w, {k / w[0], k / w[1], k / w[2]});
  auto tr = simulate(*e.system, PhasePoint{{0.3, -0.5, 0.2}, {0.1, 0.4, -0.3}}, 0.0, 20.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(zero_crossing_frequency(tr, i), k, 1e-6 * k);
}

TEST(Simulate, PendulaEnergyDriftIsSmall) {
  auto e = pendula();
  auto tr = simulate(*e.system, e.initial, 0.0, 50.0);
  const double h0 = e.system->hamiltonian(e.initial);
  double drift = 0.0;
  for (const auto& y : tr.states()) drift = std::max(drift, std::abs(e.system->hamiltonian(PhasePoint::from_flat(y, 3)) - h0));
  EXPECT_LE(drift, 1e-7);
}

TEST(Simulate, FirstIntegralsAreConserved) {
  IntegratorConfig cfg;
  for (const auto& [e, T] : {std::pair{pendula(), 30.0}, std::pair{calogero4(), 5.0}}) {
    const auto& sys = *e.system;
    auto tr = simulate(sys, e.initial, 0.0, T, cfg);
    for (std::size_t a = 0; a < sys.block_count(); ++a) {
      const double k0 = sys.first_integral(a, e.initial);
      double worst = 0.0;
      for (const auto& y : tr.states())
        worst = std::max(worst, std::abs(sys.first_integral(a, PhasePoint::from_flat(y, sys.dim())) - k0));
      EXPECT_LE(worst, 100 * cfg.rtol * std::max(1.0, std::abs(k0))) << e.name << " K_" << a + 1;
    }
  }
}

TEST(Simulate, ForwardThenBackwardReturnsToStart) {
  auto e = pendula();
  IntegratorConfig cfg;
  auto fw = simulate(*e.system, e.initial, 0.0, 10.0, cfg);
  auto end = fw.states().back();
  auto bw = integrate(simulation_field(*e.system), end, 10.0, 0.0, cfg);
  auto start = e.initial.flat();
  for (std::size_t k = 0; k < start.size(); ++k)
    EXPECT_NEAR(bw.states().back()[k], start[k], 10 * (cfg.rtol * std::max(1.0, std::abs(start[k])) + cfg.atol));
}

TEST(BlockClock, ConstantTwistGivesLinearClock) {
  auto e = fixture::oscillators3();
  auto tr = simulate(*e.system, e.initial, 0.0, 5.0);
  const std::vector<double> a{0.8, 1.2, 2.0};
  for (std::size_t r = 0; r < 3; ++r) {
    auto clock = block_clock(*e.system, tr, r);
    EXPECT_FALSE(clock.sign_changed);
    for (double t : {0.0, 0.7, 3.3, 5.0}) EXPECT_NEAR(clock.at(t), a[r] * t, 1e-12);
  }
}

TEST(BlockClock, UnitTwistGivesProperTime) {
  auto sys = decoupled_system();
  auto tr = simulate(sys, PhasePoint{{0.3, 0.1, -0.2}, {0.0, 0.5, 0.1}}, 0.0, 4.0);
  auto clock = block_clock(sys, tr, 0);
  for (std::size_t i = 0; i < clock.t.size(); ++i) EXPECT_NEAR(clock.tau[i], clock.t[i], 1e-12);
}

TEST(BlockClock, PendulaClockMatchesSimpsonQuadrature) {
  auto e = pendula();
  const auto& sys = *e.system;
  auto tr = simulate(sys, e.initial, 0.0, 30.0);
  auto clock = block_clock(sys, tr, 0);
  auto alpha1 = [&](double t) {
    auto y = tr.at(t);
    return sys.alpha(std::span<const double>(y).first(3))[0];
  };
  for (double t : {1.0, 7.5, 18.0, 30.0}) EXPECT_NEAR(clock.at(t), oracle::simpson(alpha1, 0.0, t, 20000), 1e-8);
  EXPECT_TRUE(clock.sign_changed);
  ASSERT_TRUE(clock.first_sign_change.has_value());
  EXPECT_NEAR(alpha1(*clock.first_sign_change), 0.0, 1e-10);
}

TEST(Compare, PendulaBlocksCoincide) {
  auto e = pendula();
  for (std::size_t r = 0; r < 3; ++r) {
    auto rep = compare_block_orbits(*e.system, e.initial, r, 30.0);
    EXPECT_LE(rep.sup_max, 1e-6) << "block " << r + 1;
    EXPECT_GE(rep.samples, 500u);
    EXPECT_EQ(rep.components.size(), 2u);
    for (double s : rep.sup) EXPECT_GE(s, 0.0);
  }
}

TEST(Compare, DiscrepancyShrinksWithTolerance) {
  auto e = pendula();
  CompareOptions coarse, fine;
  coarse.integrator.rtol = 1e-8;
  coarse.integrator.atol = 1e-10;
  fine.integrator.rtol = 1e-10;
  fine.integrator.atol = 1e-12;
  auto a = compare_block_orbits(*e.system, e.initial, 0, 30.0, coarse);
  auto b = compare_block_orbits(*e.system, e.initial, 0, 30.0, fine);
  EXPECT_GE(a.sup_max / b.sup_max, 5.0);
}

TEST(Compare, MonotoneSegmentPolicyStopsAtFirstZero) {
  auto e = pendula();
  CompareOptions opt;
  opt.policy = SignChangePolicy::MonotoneSegment;
  auto rep = compare_block_orbits(*e.system, e.initial, 0, 30.0, opt);
  EXPECT_TRUE(rep.sign_changed);
  EXPECT_TRUE(rep.restricted);
  EXPECT_LT(rep.t_end, 30.0);
  EXPECT_GT(rep.t_end, 0.0);
  EXPECT_LE(rep.sup_max, 1e-6);
}

TEST(Compare, DecoupledSystemAgreesToTolerance) {
  auto sys = decoupled_system();
  auto rep = compare_block_orbits(sys, PhasePoint{{0.3, 0.1, -0.2}, {0.0, 0.5, 0.1}}, 0, 10.0);
  EXPECT_LE(rep.sup_max, 1e-8);
}

TEST(Compare, CalogeroTwoDimensionalBlock) {
  auto e = calogero4();
  auto rep = compare_block_orbits(*e.system, e.initial, 2, 10.0);
  EXPECT_LE(rep.sup_max, 1e-5);
  EXPECT_EQ(rep.components, (std::vector<std::string>{"q3", "q4", "p3", "p4"}));
  // The whole orbit only ever reaches tau_3 < pi/6 (see README).
  EXPECT_LT(rep.tau_max, std::numbers::pi / 6);
}

TEST(Compare, ReproducibleGivenSameInputs) {
  auto e = pendula();
  auto a = compare_block_orbits(*e.system, e.initial, 1, 10.0);
  auto b = compare_block_orbits(*e.system, e.initial, 1, 10.0);
  EXPECT_EQ(a.sup, b.sup);
  EXPECT_EQ(a.rms, b.rms);
}

TEST(Compare, RejectsBadBlockIndex) {
  auto e = pendula();
  EXPECT_THROW(compare_block_orbits(*e.system, e.initial, 3, 1.0), ModelError);
}

TEST(MomentumName, StripsLeadingQ) {
  EXPECT_EQ(momentum_name("q7"), "p7");
  EXPECT_EQ(momentum_name("u"), "p_u");
  EXPECT_EQ(momentum_name("q"), "p_q");
}
