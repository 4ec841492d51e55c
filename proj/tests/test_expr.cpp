#include <gtest/gtest.h>

#include <random>

#include "bsep/expr.hpp"
#include "oracles.hpp"

using namespace bsep;

namespace {

std::vector<double> to_vec(const EvalPoint& p, int n) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = p.at("q" + std::to_string(i + 1));
  return x;
}

EvalPoint to_point(const std::vector<double>& x) {
  EvalPoint p;
  for (std::size_t i = 0; i < x.size(); ++i) p["q" + std::to_string(i + 1)] = x[i];
  return p;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(Parse, PendulaEntry) {
  auto e = parse("2*q1^2+2");
  EXPECT_DOUBLE_EQ(evaluate(e, {{"q1", 0.0}}), 2.0);
  EXPECT_DOUBLE_EQ(evaluate(e, {{"q1", 1.5}}), 6.5);
}

TEST(Parse, SingleVariable) {
  auto e = parse("q2");
  EXPECT_EQ(e.free_variables(), (std::set<std::string>{"q2"}));
  EXPECT_EQ(e.root().kind, NodeKind::Variable);
}

TEST(Parse, SyntaxErrorOffset) {
  try {
    parse("sin(*3");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 4u);
    EXPECT_FALSE(e.expected().empty());
  }
}

TEST(Parse, UnknownFunction) {
  try {
    parse("1 + foo(q1)");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
}

TEST(Parse, TrailingGarbageAndEmpty) {
  EXPECT_THROW(parse("q1 q2"), ParseError);
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("(q1"), ParseError);
}

TEST(Parse, Precedence) {
  EXPECT_DOUBLE_EQ(evaluate(parse("-2^2"), {}), -4.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("2^3^2"), {}), 512.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("2^-1"), {}), 0.5);
  EXPECT_DOUBLE_EQ(evaluate(parse("1-2-3"), {}), -4.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("8/2/2"), {}), 2.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("1+2*3"), {}), 7.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("1.5e1"), {}), 15.0);
}

TEST(Evaluate, Examples) {
  EXPECT_DOUBLE_EQ(evaluate(parse("(q2)^3+2"), {{"q2", 0.0}}), 2.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("cos(q1)"), {{"q1", 0.0}}), 1.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("(q3)^2+1"), {{"q3", 0.5}}), 1.25);
}

TEST(Evaluate, Errors) {
  try {
    evaluate(parse("q1 + q2"), {{"q1", 1.0}});
    FAIL();
  } catch (const EvalError& e) {
    EXPECT_EQ(e.kind(), EvalError::Kind::UnboundVariable);
  }
  try {
    evaluate(parse("1 + ln(q1)"), {{"q1", -1.0}});
    FAIL();
  } catch (const EvalError& e) {
    EXPECT_EQ(e.kind(), EvalError::Kind::Domain);
    EXPECT_EQ(e.begin(), 4u);
  }
  EXPECT_THROW(evaluate(parse("1/q1"), {{"q1", 0.0}}), EvalError);
  EXPECT_THROW(evaluate(parse("q1^0.5"), {{"q1", -2.0}}), EvalError);
  EXPECT_THROW(evaluate(parse("sqrt(q1)"), {{"q1", -2.0}}), EvalError);
  EXPECT_DOUBLE_EQ(evaluate(parse("q1^3"), {{"q1", -2.0}}), -8.0);
}

TEST(Derivative, Examples) {
  EXPECT_DOUBLE_EQ(derivative(parse("1+q1"), {{"q1", 0.7}}, "q1"), 1.0);
  auto e = parse("(q3)^2+1");
  EvalPoint p{{"q3", 2.0}};
  EXPECT_DOUBLE_EQ(derivative(e, p, "q3"), 4.0);
  oracle::Fn f = [&](const std::vector<double>& x) { return evaluate(e, {{"q3", x[0]}}); };
  EXPECT_NEAR(oracle::fd_first(f, {2.0}, 0), 4.0, 1e-8);
  EXPECT_EQ(derivative(parse("cos(q1)"), {{"q1", 0.3}}, "q5"), 0.0);
}

TEST(SecondDerivative, Examples) {
  EXPECT_DOUBLE_EQ(second_derivative(parse("q1*q2"), {{"q1", 0.3}, {"q2", 4.0}}, "q1", "q2"), 1.0);
  EXPECT_DOUBLE_EQ(second_derivative(parse("cos(q1)"), {{"q1", 0.0}}, "q1", "q1"), -1.0);
}

TEST(SecondDerivative, RandomQuarticMatchesFd) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coef(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    std::string src = "0";
    for (int i = 0; i <= 4; ++i)
      for (int j = 0; i + j <= 4; ++j)
        src += " + " + std::to_string(coef(rng)) + " * q1^" + std::to_string(i) + " * q2^" + std::to_string(j);
    auto e = parse(src);
    std::vector<double> x{coef(rng), coef(rng)};
    oracle::Fn f = [&](const std::vector<double>& y) { return evaluate(e, to_point(y)); };
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l) {
        double ad = second_derivative(e, to_point(x), "q" + std::to_string(k + 1), "q" + std::to_string(l + 1));
        EXPECT_LE(rel_err(ad, oracle::fd_second(f, x, k, l)), 1e-6) << src;
      }
  }
}

// --- properties -------------------------------------------------------------

TEST(Property, DerivativeIsLinear) {
  oracle::ExprGen gen(11, 3);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 50; ++i) {
    auto s1 = gen.make(3), s2 = gen.make(3);
    double a = u(rng), b = u(rng);
    auto e1 = parse(s1), e2 = parse(s2);
    auto comb = parse(detail::format_number(a) + " * (" + s1 + ") + " + detail::format_number(b) + " * (" + s2 + ")");
    EvalPoint p{{"q1", u(rng)}, {"q2", u(rng)}, {"q3", u(rng)}};
    for (const char* v : {"q1", "q2", "q3"}) {
      double lhs = derivative(comb, p, v);
      double rhs = a * derivative(e1, p, v) + b * derivative(e2, p, v);
      EXPECT_NEAR(lhs, rhs, 1e-12 * (1 + std::abs(rhs)));
    }
  }
}

TEST(Property, SecondDerivativeExactlySymmetric) {
  oracle::ExprGen gen(21, 3);
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<std::string> names{"q1", "q2", "q3"};
  for (int i = 0; i < 50; ++i) {
    auto e = parse(gen.make(4));
    EvalPoint p{{"q1", u(rng)}, {"q2", u(rng)}, {"q3", u(rng)}};
    Program prog(e, names);
    std::vector<double> x = to_vec(p, 3);
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l) {
        EXPECT_EQ(second_derivative(e, p, names[k], names[l]), second_derivative(e, p, names[l], names[k]));
        EXPECT_EQ(prog.second_derivative(x, k, l), prog.second_derivative(x, l, k));
      }
  }
}

TEST(Property, PrettyPrintRoundTrip) {
  oracle::ExprGen gen(31, 3);
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 100; ++i) {
    auto e = parse(gen.make(4));
    auto back = parse(e.to_string());
    EXPECT_EQ(back.to_string(), e.to_string());
    EvalPoint p{{"q1", u(rng)}, {"q2", u(rng)}, {"q3", u(rng)}};
    EXPECT_EQ(evaluate(back, p), evaluate(e, p)) << e.source() << "  ->  " << e.to_string();
  }
}

TEST(Property, FreeVariablesExact) {
  oracle::ExprGen gen(41, 5);
  for (int i = 0; i < 50; ++i) {
    auto src = gen.make(3);
    auto fv = parse(src).free_variables();
    for (int k = 1; k <= 5; ++k) {
      std::string v = "q" + std::to_string(k);
      bool present = false;
      for (std::size_t pos = src.find(v); pos != std::string::npos; pos = src.find(v, pos + 1)) {
        char next = pos + v.size() < src.size() ? src[pos + v.size()] : ' ';
        if (!std::isdigit(static_cast<unsigned char>(next))) present = true;
      }
      EXPECT_EQ(fv.count(v) == 1, present) << src << " " << v;
    }
  }
}

TEST(Property, AdMatchesFiniteDifferences) {
  oracle::ExprGen gen(51, 3);
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<std::string> names{"q1", "q2", "q3"};
  for (int i = 0; i < 50; ++i) {
    auto e = parse(gen.make(3));
    std::vector<double> x{u(rng), u(rng), u(rng)};
    oracle::Fn f = [&](const std::vector<double>& y) { return evaluate(e, to_point(y)); };
    for (int k = 0; k < 3; ++k) {
      EXPECT_LE(rel_err(derivative(e, to_point(x), names[k]), oracle::fd_first(f, x, k)), 1e-6) << e.source();
      for (int l = k; l < 3; ++l)
        EXPECT_LE(rel_err(second_derivative(e, to_point(x), names[k], names[l]), oracle::fd_second(f, x, k, l)),
                  1e-6)
            << e.source();
    }
  }
}

TEST(Program, AgreesWithTreeWalk) {
  oracle::ExprGen gen(61, 3);
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<std::string> names{"q1", "q2", "q3"};
  for (int i = 0; i < 50; ++i) {
    auto e = parse(gen.make(4));
    Program prog(e, names);
    std::vector<double> x{u(rng), u(rng), u(rng)};
    auto p = to_point(x);
    EXPECT_EQ(prog.value(x), evaluate(e, p));
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(prog.derivative(x, k), derivative(e, p, names[k]), 1e-13);
  }
  EXPECT_THROW(Program(parse("q9"), names), EvalError);
}

TEST(Evaluate, Deterministic) {
  auto e = parse("sin(q1)^2 * exp(q2) / (1 + q1^2)");
  EvalPoint p{{"q1", 0.3}, {"q2", -0.7}};
  double first = evaluate(e, p);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(evaluate(e, p), first);
}
