#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bsep/catalog.hpp"
#include "bsep/dynamics.hpp"
#include "bsep/geometry.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bsep;

namespace {

std::vector<Point> e3_points(const E3Metric& m, std::size_t n, std::uint64_t seed) { return sample_box(m.box, n, seed); }

double max_riemann(const MetricField& g, const std::vector<Point>& pts) {
  double worst = 0;
  for (const auto& q : pts) worst = std::max(worst, riemann(g, q).max_abs());
  return worst;
}

template <typename V>
double max_abs(const V& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// (S S^{-1}) with both matrices as printed for the Calogero example, in (r, phi1).
Matrix printed_product(double r, double phi1) {
  const std::vector<std::string> names{"r", "phi1"};
  const std::vector<std::vector<std::string>> s{{"1", "0", "-1/r^2"},
                                                {"0", "1/(2*sin(phi1)^2)", "(2*sin(phi1)^2-1)/(2*sin(phi1)^2)"},
                                                {"0", "-1/2", "1/2"}};
  const std::vector<std::vector<std::string>> inv{{"1", "1/r^2", "1/(r^2*sin(phi1)^2)"},
                                                  {"0", "1", "(1-2*sin(phi1)^2)/sin(phi1)^2"},
                                                  {"0", "1", "1/sin(phi1)^2"}};
  const std::vector<double> q{r, phi1};
  Matrix a(3, 3), b(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      a(i, j) = Program(parse(s[i][j]), names).value(q);
      b(i, j) = Program(parse(inv[i][j]), names).value(q);
    }
  return a * b;
}

}  // namespace

// --- pendula --------------------------------------------------------------------------

TEST(Pendula, StructureAndDeterminantExpansion) {
  auto e = pendula();
  const auto& sys = *e.system;
  EXPECT_EQ(sys.block_count(), 3u);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(sys.structure().size(r), 1u);
  const std::vector<double> origin{0, 0, 0};
  MatJet s = sys.stackel_jet(origin, 1);
  const double det = s.value.determinant();
  EXPECT_NEAR(det, 5.0, 1e-12);
  // d det = det tr(S^{-1} dS)
  const Matrix inv = s.value.inverse();
  const double expect[3] = {5, -6, 2};
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(det * (inv * s.grad[k]).trace(), expect[k], 1e-12);
}

TEST(Pendula, BlockHamiltoniansAndConstants) {
  auto e = pendula();
  const auto& sys = *e.system;
  const PhasePoint x{{0.4, -0.1, 0.2}, {0.3, 0.5, -0.7}};
  auto h = sys.block_energies(x);
  EXPECT_NEAR(h[0], 0.5 * (0.09 - std::cos(0.4)), 1e-15);
  EXPECT_NEAR(h[1], 0.5 * (0.25 - std::cos(-0.1)), 1e-15);
  EXPECT_NEAR(h[2], 0.5 * 0.49, 1e-15);
  EXPECT_NEAR(sys.hamiltonian(e.initial), 0.09494666248, 1e-10);
  EXPECT_NEAR(sys.first_integral(1, e.initial), 0.0916913483, 1e-9);
  EXPECT_NEAR(sys.first_integral(2, e.initial), -0.3797866499, 1e-9);
  for (const auto& q : e.sample(50, 1)) EXPECT_GT(sys.stackel_jet(q, 0).value.determinant(), 0.5);
}

// --- oscillators -------------------------------------------------------------------------

TEST(Oscillators, RejectsNonpositiveTwist) {
  EXPECT_THROW(oscillators({1.0, 2.0}, {1.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(oscillators({1.0, 2.0}, {-1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(oscillators({1.0, 2.0}, {1.0}), std::invalid_argument);
}

TEST(Oscillators, TwistRowIsAlpha) {
  auto e = fixture::oscillators3();
  for (const auto& q : e.sample(5, 2)) {
    Vector a = e.system->alpha(q);
    EXPECT_NEAR(a[0], 0.8, 1e-15);
    EXPECT_NEAR(a[1], 1.2, 1e-15);
    EXPECT_NEAR(a[2], 2.0, 1e-15);
  }
}

TEST(Oscillators, UnitTwistIsDirectSum) {
  auto e = oscillators({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0});
  const PhasePoint x{{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}};
  double h = 0;
  for (int i = 0; i < 3; ++i) h += 0.5 * (x.p[i] * x.p[i] + (i + 1) * (i + 1) * x.q[i] * x.q[i]);
  EXPECT_NEAR(e.system->hamiltonian(x), h, 1e-15);
}

TEST(Oscillators, ClosedFormSolvesHamiltonsEquations) {
  auto e = fixture::oscillators3();
  const double t = 0.7;
  auto x = e.closed_form(e.initial, t);
  auto xp = e.closed_form(e.initial, t + 1e-5);
  auto xm = e.closed_form(e.initial, t - 1e-5);
  auto f = full_field(*e.system, x);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR((xp.q[i] - xm.q[i]) / 2e-5, f[i], 1e-8);
    EXPECT_NEAR((xp.p[i] - xm.p[i]) / 2e-5, f[3 + i], 1e-8);
  }
  auto x0 = e.closed_form(e.initial, 0.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x0.q[i], e.initial.q[i], 1e-15);
}

// --- Calogero ---------------------------------------------------------------------------

TEST(Calogero, RotationIsOrthogonal) {
  const auto& a = calogero::rotation();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a[k][i] * a[k][j];
      EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-15);
    }
}

TEST(Calogero, DiagonalPointMapsToPole) {
  auto e = calogero4();
  const auto& stages = e.cartesian->transform.stages();
  auto z = stages[0].to_new(std::vector<double>{1, 1, 1, 1});
  EXPECT_NEAR(z[0], 0.0, 1e-15);
  EXPECT_NEAR(z[1], 0.0, 1e-15);
  EXPECT_NEAR(z[2], 0.0, 1e-15);
  EXPECT_NEAR(z[3], 2.0, 1e-15);
  auto q = e.cartesian->transform.positions(std::vector<double>{1, 1, 1, 1});
  EXPECT_NEAR(q[0], 2.0, 1e-15);
  EXPECT_NEAR(q[1], 0.0, 1e-7);  // phi1 = 0: on the excluded band
  EXPECT_FALSE(e.acceptable(q));
}

TEST(Calogero, TransformRoundTripAndCanonicity) {
  auto e = calogero4();
  const auto& tr = e.cartesian->transform;
  for (const auto& x : fixture::phase_points(e, 50, 3)) {
    auto back = tr.positions(tr.inverse_positions(x.q));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(back[i], x.q[i], 1e-10);
    auto rt = tr.forward(tr.backward(x));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(rt.p[i], x.p[i], 1e-10);

    // M^T J M = J for M = d(new)/d(old), by finite differences of forward().
    auto old = tr.backward(x);
    const std::vector<double> y0 = old.flat();
    Matrix m(8, 8);
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t r = 0; r < 8; ++r) {
        oracle::Fn f = [&](const std::vector<double>& y) { return tr.forward(PhasePoint::from_flat(y, 4)).flat()[r]; };
        m(ix(r), ix(c)) = oracle::fd_first(f, y0, c);
      }
    Matrix j = Matrix::Zero(8, 8);
    j.topRightCorner(4, 4) = Matrix::Identity(4, 4);
    j.bottomLeftCorner(4, 4) = -Matrix::Identity(4, 4);
    // FD roundoff grows with the entries of M, so the bound is relative to |M|^2.
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    EXPECT_LE((m.transpose() * j * m - j).cwiseAbs().maxCoeff(), 1e-9 * scale * scale);
  }
}

TEST(Calogero, PrintedStackelMatricesAreInverse) {
  auto e = calogero4();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> r(0.3, 3.0), ph(0.1, std::numbers::pi - 0.1);
  for (int i = 0; i < 100; ++i) {
    const double rr = r(rng), p1 = ph(rng);
    EXPECT_LE((printed_product(rr, p1) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
    // the system's numeric inverse agrees with the printed one
    const std::vector<double> q{rr, p1, 1.0, 0.5};
    Matrix inv = e.system->twist_rows(q).inverse;
    const double s2 = std::sin(p1) * std::sin(p1);
    EXPECT_NEAR(inv(0, 1), 1 / (rr * rr), 1e-12);
    EXPECT_NEAR(inv(0, 2), 1 / (rr * rr * s2), 1e-12 / s2);
    EXPECT_NEAR(inv(1, 2), (1 - 2 * s2) / s2, 1e-12 / s2);
    EXPECT_NEAR(inv(2, 2), 1 / s2, 1e-12 / s2);
  }
}

TEST(Calogero, CartesianAndSphericalIntegralsAgree) {
  auto e = calogero4();
  const auto& ref = *e.cartesian;
  for (const auto& x : fixture::phase_points(e, 200, 5)) {
    auto cart = ref.transform.backward(x);
    ASSERT_GT(calogero::min_gap(cart.q), 0.05);
    for (std::size_t a = 0; a < 3; ++a) {
      const double c = ref.integrals[a].value(cart);
      const double s = e.system->first_integral(a, x);
      EXPECT_LE(std::abs(c - s), 1e-9 * std::max(1.0, std::abs(c))) << "K_" << a + 1;
    }
  }
}

TEST(Calogero, LeafPotentialMatchesPulledBackPotential) {
  // r^2 sin^2(phi1) V(x(q)) depends on (phi2, phi3) only and equals V_3.
  auto e = calogero4();
  const auto& ref = *e.cartesian;
  const Program v3(parse(calogero::leaf_potential_string()), std::vector<std::string>{"q1", "q2", "q3", "q4"});
  for (const auto& q : e.sample(50, 6)) {
    const double f = v3.value(q);
    for (double r : {0.6, 1.0, 1.9})
      for (double p1 : {0.3, 1.2, 2.5}) {
        std::vector<double> y{r, p1, q[2], q[3]};
        const double s = std::sin(p1);
        const double pulled = r * r * s * s * ref.potential.value(ref.transform.inverse_positions(y));
        EXPECT_LE(std::abs(pulled - f), 1e-8 * std::abs(f));
      }
  }
}

TEST(Calogero, CollisionPlanesAreDomainErrors) {
  auto e = calogero4();
  EXPECT_THROW(e.cartesian->potential.value(std::vector<double>{1.0, 1.0, 2.0, 3.0}), EvalError);
}

TEST(Calogero, K2EigenvaluesAndStructure) {
  auto e = calogero4();
  EXPECT_EQ(e.system->structure().sizes(), (std::vector<std::size_t>{1, 1, 2}));
  const std::vector<double> x{0.3, -1.2, 0.8, 1.9};
  Eigen::SelfAdjointEigenSolver<Matrix> es(e.cartesian->killing[1].value(x));
  const double r2 = 0.09 + 1.44 + 0.64 + 3.61;
  EXPECT_NEAR(es.eigenvalues()[0], 0.0, 1e-12);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(es.eigenvalues()[i], r2, 1e-12);
}

// --- E^3 families -------------------------------------------------------------------------

TEST(E3CaseI, Preconditions) {
  EXPECT_THROW(e3_case_i(0, 0, 0, 0, parse("1")), std::invalid_argument);
  EXPECT_THROW(e3_case_i(0, 0, 1, 0, parse("u")), std::invalid_argument);
}

TEST(E3CaseI, CylindricalPresetIsFlat) {
  auto m = e3_case_i(0, 0, 1, 0, parse("1"));
  EXPECT_LE(max_riemann(m.metric, e3_points(m, 50, 7)), 1e-6);
}

TEST(E3CaseI, ExponentialPresetSolvesTheSystemAndIsFlat) {
  const double c1 = 0.7;
  auto m = e3_case_i(0, c1, 1.3, 0, parse("exp(-0.7*v)*cos(0.7*w)"));
  auto pts = e3_points(m, 50, 8);
  for (const auto& q : pts) {
    EXPECT_LE(max_abs(case_i_compatibility_residuals(m, q)), 1e-12);
    EXPECT_LE(max_abs(case_i_f_residuals(m, q)), 1e-12);
  }
  EXPECT_LE(max_riemann(m.metric, pts), 1e-6);
}

TEST(E3CaseI, ExponentialFWithZeroConstantsIsReportedAndCurved) {
  // f = e^v: the first compatibility equation for l holds (l constant) but
  // f_vv = e^v does not vanish, so the f-system fails and the metric is curved.
  auto m = e3_case_i(0, 0, 1, 0, parse("exp(v)"));
  auto pts = e3_points(m, 20, 9);
  for (const auto& q : pts) {
    auto comp = case_i_compatibility_residuals(m, q);
    EXPECT_LE(std::abs(comp[0]), 1e-14);
    EXPECT_NEAR(comp[1], std::exp(q[1]), 1e-12);
    EXPECT_NEAR(case_i_f_residuals(m, q)[0], std::exp(q[1]), 1e-12);
  }
  EXPECT_GE(max_riemann(m.metric, pts), 1e-3);
}

TEST(E3CaseI, ViolatingFIsCurved) {
  auto m = e3_case_i(0.2, 0.1, 1, -0.3, parse("1 + v^2*w"));
  EXPECT_GE(max_riemann(m.metric, e3_points(m, 20, 10)), 1e-3);
}

TEST(E3CaseI, SystemRealizationIsSeparableAndMatchesMetric) {
  auto m = e3_case_i(0, 0.7, 1.3, 0, parse("exp(-0.7*v)*cos(0.7*w)"));
  auto sys = e3_case_i_system(m, 0.4, "1 + 0.1*v^2");
  auto g = system_metric(sys);
  for (const auto& q : e3_points(m, 10, 11)) {
    EXPECT_LE((g.contravariant(q, 0).value - 2 * m.metric.contravariant(q, 0).value).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(block_eisenhart_residual(sys, 1, q), 1e-9);
    auto lc = block_levi_civita_residual(sys, q);
    EXPECT_LE(std::max(lc.metric, lc.potential), 1e-9);
  }
}

TEST(E3CaseII, Preconditions) {
  EXPECT_THROW(e3_case_ii(0, 0, parse("1")), std::invalid_argument);
  auto m = e3_case_ii(1.0, 0.5, parse("(1 + v^2 + w^2)/2"));
  EXPECT_THROW(m.metric.contravariant(std::vector<double>{-0.5, 0.1, 0.1}, 0), EvalError);
}

TEST(E3CaseII, PlanarLeavesAreFlat) {
  auto m = e3_case_ii(0, -1, parse("1"));
  auto pts = e3_points(m, 50, 12);
  for (const auto& q : pts) {
    EXPECT_LE(max_abs(case_ii_residuals(m, q)), 1e-14);
    EXPECT_LE(std::abs(case_ii_leaf_residual(m, q)), 1e-14);
  }
  EXPECT_LE(max_riemann(m.metric, pts), 1e-6);
}

TEST(E3CaseII, SphericalLeavesHaveConstantCurvature) {
  for (double c1 : {1.0, 0.6}) {
    auto m = e3_case_ii(c1, 0.5, parse(detail::format_number(c1) + "*(1 + v^2 + w^2)/2"));
    auto pts = e3_points(m, 50, 13);
    EXPECT_LE(max_riemann(m.metric, pts), 1e-6);
    for (const auto& q : pts) {
      EXPECT_LE(std::abs(case_ii_leaf_residual(m, q)), 1e-12);
      EXPECT_LE(max_abs(case_ii_residuals(m, q)), 1e-10);
      const double l = -1 / (c1 * q[0] + 0.5);
      const double f = c1 * (1 + q[1] * q[1] + q[2] * q[2]) / 2;
      auto leaf = leaf_metric(m.metric, 0, q[0]);
      const std::vector<double> y{q[1], q[2]};
      const double expect = 2 * l * l * c1 * c1;
      EXPECT_LE(std::abs(scalar_curvature(leaf, y) - expect), 1e-6 * expect);
      const double rv = riemann(leaf, y)(0, 1, 0, 1);  // R^v_{wvw}
      EXPECT_LE(std::abs(rv - c1 * c1 / (f * f)), 1e-6 * c1 * c1 / (f * f));
    }
  }
}

TEST(E3CaseII, ViolatingFIsCurved) {
  auto m = e3_case_ii(1.0, 0.5, parse("1 + v^2"));
  EXPECT_GE(max_riemann(m.metric, e3_points(m, 20, 14)), 1e-3);
}

TEST(E3CaseII, SystemRealizationIsSeparable) {
  auto m = e3_case_ii(1.0, 0.5, parse("(1 + v^2 + w^2)/2"));
  auto sys = e3_case_ii_system(m, -0.3, "2 + w");
  auto g = system_metric(sys);
  for (const auto& q : e3_points(m, 10, 15)) {
    EXPECT_LE((g.contravariant(q, 0).value - 2 * m.metric.contravariant(q, 0).value).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(block_eisenhart_residual(sys, 1, q), 1e-9);
  }
}

TEST(Catalog, NamesAndBuildValidation) {
  EXPECT_EQ(catalog_names().size(), 5u);
  for (const auto& e : {pendula(), fixture::oscillators3(), calogero4()}) {
    EXPECT_TRUE(e.system);
    EXPECT_FALSE(e.box.empty());
    EXPECT_EQ(e.initial.dim(), e.system->dim());
  }
}
