#include <gtest/gtest.h>

#include <random>

#include "bsep/model.hpp"
#include "oracles.hpp"

using namespace bsep;

namespace {

TwistedSystem pendula_system() {
  auto s = StackelMatrix::from_strings({{"2", "1+q1", "2*q1^2+2"}, {"3", "q2", "q2^3+2"}, {"4", "q3", "q3^2+1"}});
  std::vector<NaturalBlock> blocks{NaturalBlock::from_strings({{"1"}}, "-0.5*cos(q1)"),
                                   NaturalBlock::from_strings({{"1"}}, "-0.5*cos(q2)"),
                                   NaturalBlock::from_strings({{"1"}}, "0")};
  ProbeSpec probes;
  probes.points = {{0, 0, 0}};
  probes.box = {{-0.4, -0.4, -0.4}, {0.4, 0.4, 0.4}};
  return build_system(BlockStructure({1, 1, 1}), s, blocks, probes);
}

TwistedSystem identity_system() {
  auto s = StackelMatrix::from_strings({{"1", "0"}, {"0", "1"}});
  std::vector<NaturalBlock> blocks{NaturalBlock::from_strings({{"1"}}, "0.5*q1^2"),
                                   NaturalBlock::from_strings({{"1", "0"}, {"0", "1 + q3^2"}}, "q2*q3")};
  return build_system(BlockStructure({1, 2}), s, blocks);
}

const PhasePoint kP0{{0.2, -0.2, 0.0}, {0.0, 0.0, 0.0}};

}  // namespace

TEST(BlockStructure, IndexMapsAreInverse) {
  BlockStructure st({2, 1, 3});
  EXPECT_EQ(st.dim(), 6u);
  EXPECT_EQ(st.names()[5], "q6");
  for (std::size_t k = 0; k < st.dim(); ++k) EXPECT_EQ(st.global(st.block_of(k), st.local_index(k)), k);
  for (std::size_t r = 0; r < st.blocks(); ++r)
    for (std::size_t i = 0; i < st.size(r); ++i) {
      auto k = st.global(r, i);
      EXPECT_EQ(st.block_of(k), r);
      EXPECT_EQ(st.local_index(k), i);
    }
  EXPECT_THROW(BlockStructure({1, 0}), ModelError);
  EXPECT_THROW(BlockStructure({1, 1}, {"x", "x"}), ModelError);
  EXPECT_THROW(BlockStructure({1, 1}, {"x"}), ModelError);
}

TEST(BuildSystem, PendulaValid) {
  auto sys = pendula_system();
  EXPECT_EQ(sys.block_count(), 3u);
  EXPECT_EQ(sys.probe_points().size(), 21u);
}

TEST(BuildSystem, ForeignVariableNamed) {
  auto s = StackelMatrix::from_strings({{"2", "1+q1", "2*q1^2+2"}, {"3", "q2 + q1", "q2^3+2"}, {"4", "q3", "q3^2+1"}});
  std::vector<NaturalBlock> blocks(3, NaturalBlock::from_strings({{"1"}}, "0"));
  try {
    build_system(BlockStructure({1, 1, 1}), s, blocks);
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_EQ(e.kind(), ModelError::Kind::ForeignVariable);
    std::string msg = e.what();
    EXPECT_NE(msg.find("(2,2)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'q1'"), std::string::npos) << msg;
  }
}

TEST(BuildSystem, ForeignVariableInPotential) {
  auto s = StackelMatrix::from_strings({{"1", "0"}, {"0", "1"}});
  std::vector<NaturalBlock> blocks{NaturalBlock::from_strings({{"1"}}, "q2"),
                                   NaturalBlock::from_strings({{"1"}}, "0")};
  EXPECT_THROW(build_system(BlockStructure({1, 1}), s, blocks), ModelError);
}

TEST(BuildSystem, DimensionAndSingularity) {
  std::vector<NaturalBlock> two(2, NaturalBlock::from_strings({{"1"}}, "0"));
  EXPECT_THROW(build_system(BlockStructure({1, 1, 1}), StackelMatrix::from_strings({{"1", "0"}, {"0", "1"}}), two),
               ModelError);
  EXPECT_THROW(build_system(BlockStructure({1, 1}), StackelMatrix::from_strings({{"1", "0"}, {"0", "1"}}),
                            {NaturalBlock::from_strings({{"1", "0"}, {"0", "1"}}, "0"),
                             NaturalBlock::from_strings({{"1"}}, "0")}),
               ModelError);
  ProbeSpec probes;
  probes.points = {{0.0, 1.0}};
  try {
    build_system(BlockStructure({1, 1}), StackelMatrix::from_strings({{"q1", "1"}, {"0", "1"}}), two, probes);
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_EQ(e.kind(), ModelError::Kind::Singular);
  }
  probes.points = {{0.0, 0.0}};
  EXPECT_THROW(build_system(BlockStructure({1, 1}), StackelMatrix::from_strings({{"1", "0"}, {"0", "1"}}),
                            {NaturalBlock::from_strings({{"q1"}}, "0"), NaturalBlock::from_strings({{"1"}}, "0")},
                            probes),
               ModelError);
}

TEST(BuildSystem, AsymmetricMetricRejected) {
  EXPECT_THROW(NaturalBlock::from_strings({{"1", "q1"}, {"0", "1"}}, "0"), ModelError);
  auto upper = NaturalBlock::from_strings({{"1", "q1"}, {"2"}}, "0");
  EXPECT_EQ(upper.metric(1, 0).source(), "q1");
}

TEST(TwistRows, PendulaAtOriginAgainstAdjugate) {
  auto sys = pendula_system();
  std::vector<double> q{0, 0, 0};
  auto rows = sys.twist_rows(q);
  oracle::M3 m{{{2, 1, 2}, {3, 0, 2}, {4, 0, 1}}};
  EXPECT_DOUBLE_EQ(oracle::det3(m), 5.0);
  auto inv = oracle::inverse3(m);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(rows.inverse(i, j), inv[i][j], 1e-15);
  EXPECT_NEAR(rows.inverse(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(rows.inverse(0, 1), -0.2, 1e-15);
  EXPECT_NEAR(rows.inverse(0, 2), 0.4, 1e-15);
  EXPECT_FALSE(rows.ill_conditioned);
}

TEST(TwistRows, IdentityAndAlpha) {
  auto sys = identity_system();
  std::vector<double> q{0.3, 0.1, 0.2};
  EXPECT_TRUE(sys.twist_rows(q).inverse.isIdentity(0.0));
  auto a = sys.alpha(q);
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(a[1], 0.0);
}

TEST(BlockEnergy, Examples) {
  auto sys = pendula_system();
  EXPECT_DOUBLE_EQ(sys.block_energy(0, {{0, 0, 0}, {0, 0, 0}}), -0.5);
  EXPECT_DOUBLE_EQ(sys.block_energy(2, {{0, 0, 0}, {0, 0, 2}}), 2.0);
  auto id = identity_system();
  EXPECT_EQ(id.block_energy(1, {{0, 0, 0}, {0, 0, 0}}), 0.0);
  EXPECT_THROW(sys.block_energy(3, kP0), ModelError);
}

TEST(Hamiltonian, PendulaConstants) {
  auto sys = pendula_system();
  EXPECT_NEAR(sys.hamiltonian(kP0), 0.09494666248, 1e-8);
  EXPECT_NEAR(sys.first_integral(1, kP0), 0.0916913483, 1e-8);
  EXPECT_NEAR(sys.first_integral(2, kP0), -0.3797866499, 1e-8);
  EXPECT_EQ(sys.first_integral(0, kP0), sys.hamiltonian(kP0));
  EXPECT_THROW(sys.first_integral(3, kP0), ModelError);
  auto c = sys.separation_constants(kP0);
  EXPECT_NEAR(c[0], 0.09494666248, 1e-8);
  EXPECT_NEAR(c[1], 0.0916913483, 1e-8);
  EXPECT_NEAR(c[2], -0.3797866499, 1e-8);
}

TEST(Hamiltonian, IdentityGivesBlockEnergies) {
  auto sys = identity_system();
  PhasePoint x{{0.4, -0.3, 0.7}, {1.1, 0.2, -0.5}};
  EXPECT_EQ(sys.hamiltonian(x), sys.block_energy(0, x));
  EXPECT_EQ(sys.first_integral(1, x), sys.block_energy(1, x));
  auto c = sys.separation_constants(x);
  EXPECT_EQ(c[0], sys.block_energy(0, x));
  EXPECT_EQ(c[1], sys.block_energy(1, x));
}

TEST(ReducedHamiltonian, PendulaVanishesAtDefiningPoint) {
  auto sys = pendula_system();
  auto c = sys.separation_constants(kP0);
  std::vector<double> cv(c.data(), c.data() + c.size());
  for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(sys.reduced_hamiltonian(r, cv, kP0), 0.0, 1e-15);
  // Coefficient of c_3 in block 1 is -(2 q1^2 + 2).
  PhasePoint x{{0.7, 0, 0}, {0.3, 0, 0}};
  std::vector<double> e3{0, 0, 1}, zero{0, 0, 0};
  EXPECT_NEAR(sys.reduced_hamiltonian(0, e3, x) - sys.reduced_hamiltonian(0, zero, x), -(2 * 0.49 + 2), 1e-15);
  EXPECT_THROW(sys.reduced_hamiltonian(0, std::vector<double>{1, 2}, x), ModelError);
}

TEST(SingleBlock, AllowedAndDividesByEntry) {
  auto sys = build_system(BlockStructure({2}), StackelMatrix::from_strings({{"2 + q1^2"}}),
                          {NaturalBlock::from_strings({{"1", "0"}, {"0", "1"}}, "q2")});
  PhasePoint x{{0.5, 0.25}, {1.0, 2.0}};
  EXPECT_NEAR(sys.hamiltonian(x), (0.5 * 5.0 + 0.25) / 2.25, 1e-15);
}

// --- properties -------------------------------------------------------------

TEST(Property, ReconstructionAndIdentity) {
  auto sys = pendula_system();
  auto pts = sample_box({{-0.4, -0.4, -0.4}, {0.4, 0.4, 0.4}}, 100, 42);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (const auto& q : pts) {
    PhasePoint x{q, {u(rng), u(rng), u(rng)}};
    auto rows = sys.twist_rows(q);
    Matrix s = sys.stackel_jet(q, 0).value;
    if (rows.condition <= kConditionWarning)
      EXPECT_LE((s * rows.inverse - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
    auto c = sys.separation_constants(x);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_LE(std::abs(sys.block_energy(r, x) - s.row(r).dot(c)), 1e-10);
  }
}

TEST(Property, TwistRowDerivativeIdentity) {
  // d_{r_i}(alpha^s) S^j_s = -alpha^r d_{r_i} S^j_r
  auto sys = pendula_system();
  for (const auto& q : sample_box({{-0.4, -0.4, -0.4}, {0.4, 0.4, 0.4}}, 50, 43)) {
    auto sj = sys.stackel_jet(q, 1);
    auto ij = sys.inverse_jet(q, 1).jet;
    for (std::size_t k = 0; k < 3; ++k) {
      std::size_t r = sys.structure().block_of(k);
      for (std::size_t j = 0; j < 3; ++j) {
        double lhs = 0;
        for (std::size_t s = 0; s < 3; ++s) lhs += ij.d(k)(0, s) * sj.value(s, j);
        double rhs = -ij.value(0, r) * sj.d(k)(r, j);
        EXPECT_NEAR(lhs, rhs, 1e-9);
      }
    }
  }
}

TEST(Property, InverseJetMatchesFiniteDifferences) {
  auto sys = pendula_system();
  std::vector<double> q{0.13, -0.21, 0.3};
  auto ij = sys.inverse_jet(q, 2).jet;
  for (int a = 0; a < 3; ++a)
    for (int r = 0; r < 3; ++r) {
      oracle::Fn f = [&](const std::vector<double>& y) { return sys.twist_rows(y).inverse(a, r); };
      for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_NEAR(ij.d(k)(a, r), oracle::fd_first(f, q, k), 1e-8);
        for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(ij.dd(k, l)(a, r), oracle::fd_second(f, q, k, l), 1e-6);
      }
    }
}

TEST(CandidateStackel, KeepsHamiltonianChangesIntegrals) {
  auto sys = pendula_system();
  auto bad = StackelMatrix::from_strings({{"2.1", "1+q1", "2*q1^2+2"}, {"3", "q2", "q2^3+2"}, {"4", "q3", "q3^2+1"}});
  auto cand = with_candidate_stackel(sys, bad);
  EXPECT_TRUE(cand.has_candidate_stackel());
  EXPECT_EQ(cand.hamiltonian(kP0), sys.hamiltonian(kP0));
  EXPECT_NE(cand.first_integral(1, kP0), sys.first_integral(1, kP0));
}
