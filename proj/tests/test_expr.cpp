#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>

#include "hjminmax/expr.hpp"

using hjminmax::EvalError;
using hjminmax::Expression;
using hjminmax::ParseError;

TEST(Parse, CubicHamiltonianMatchesClosedForm) {
  const auto e = Expression::parse("-p^3+p^2+p");
  for (double p : {-2.0, -0.5, 0.0, 0.3, 1.0, 1.7}) EXPECT_DOUBLE_EQ(e.eval(0, 0, p), -p * p * p + p * p + p);
}

TEST(Parse, ZeroIsConstant) {
  const auto e = Expression::parse("0");
  ASSERT_EQ(e.program().size(), 1u);
  EXPECT_EQ(e.program()[0].op, Expression::Op::konst);
  EXPECT_EQ(e.eval(1, 2, 3), 0.0);
}

TEST(Parse, RotationHamiltonian) {
  const auto e = Expression::parse("x^2+p^2");
  EXPECT_DOUBLE_EQ(e.eval(0, 3, 4), 25.0);
}

TEST(Parse, PowerBindsTighterThanUnaryMinus) {
  EXPECT_DOUBLE_EQ(Expression::parse("-p^2").eval(0, 0, 3), -9.0);
  EXPECT_DOUBLE_EQ(Expression::parse("(-p)^2").eval(0, 0, 3), 9.0);
}

TEST(Parse, PowerIsRightAssociative) {
  EXPECT_DOUBLE_EQ(Expression::parse("p^2^3").eval(0, 0, 2), 256.0);
  EXPECT_DOUBLE_EQ(Expression::parse("x^-2").eval(0, 2, 0), 0.25);
}

TEST(Parse, LeftAssociativeArithmetic) {
  EXPECT_DOUBLE_EQ(Expression::parse("8-3-2").eval(0, 0, 0), 3.0);
  EXPECT_DOUBLE_EQ(Expression::parse("8/4/2").eval(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(Expression::parse("2+3*4").eval(0, 0, 0), 14.0);
}

TEST(Parse, NumbersAndFunctions) {
  EXPECT_DOUBLE_EQ(Expression::parse("1.5e-1 + .5").eval(0, 0, 0), 0.65);
  EXPECT_NEAR(Expression::parse("sin(x)^2 + cos(x)^2").eval(0, 0.7, 0), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(Expression::parse("exp(t)").eval(1, 0, 0), std::exp(1.0));
  EXPECT_DOUBLE_EQ(Expression::parse("tanh(p)").eval(0, 0, 0.3), std::tanh(0.3));
}

TEST(ParseErrors, SyntaxErrorCarriesPosition) {
  try {
    Expression::parse("p + * 2");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 4u);
  }
  EXPECT_THROW(Expression::parse("(p + 1"), ParseError);
  EXPECT_THROW(Expression::parse(""), ParseError);
  EXPECT_THROW(Expression::parse("p 2"), ParseError);
}

TEST(ParseErrors, UnknownIdentifier) {
  try {
    Expression::parse("p + q");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 4u);
    EXPECT_NE(std::string(e.what()).find("unknown identifier"), std::string::npos);
  }
  EXPECT_THROW(Expression::parse("abs(p)"), ParseError);
}

TEST(ParseErrors, NonIntegerExponent) {
  EXPECT_THROW(Expression::parse("p^0.5"), ParseError);
  EXPECT_THROW(Expression::parse("p^x"), ParseError);
  EXPECT_NO_THROW(Expression::parse("p^(4/2)"));
}

TEST(Eval, CubicAtOneHasZeroSlope) {
  const auto g = Expression::parse("-p^3+p^2+p").eval_with_grad(0, 0, 1);
  EXPECT_DOUBLE_EQ(g.value, 1.0);
  EXPECT_DOUBLE_EQ(g.dt, 0.0);
  EXPECT_DOUBLE_EQ(g.dx, 0.0);
  EXPECT_DOUBLE_EQ(g.dp, 0.0);
}

TEST(Eval, ZeroEverywhere) {
  const auto g = Expression::parse("0").eval_with_grad(0.3, -2, 5);
  EXPECT_EQ(g.value, 0.0);
  EXPECT_EQ(g.dt, 0.0);
  EXPECT_EQ(g.dx, 0.0);
  EXPECT_EQ(g.dp, 0.0);
}

TEST(Eval, RotationGradient) {
  const auto g = Expression::parse("x^2+p^2").eval_with_grad(0, 1, 0);
  EXPECT_DOUBLE_EQ(g.value, 1.0);
  EXPECT_DOUBLE_EQ(g.dt, 0.0);
  EXPECT_DOUBLE_EQ(g.dx, 2.0);
  EXPECT_DOUBLE_EQ(g.dp, 0.0);
}

TEST(Eval, DivisionByZeroAndOverflow) {
  EXPECT_THROW(Expression::parse("1/x").eval(0, 0, 0), EvalError);
  EXPECT_THROW(Expression::parse("1/x").eval_with_grad(0, 0, 0), EvalError);
  EXPECT_THROW(Expression::parse("exp(x)").eval(0, 1000, 0), EvalError);
}

// Random expression trees over t, x, p with bounded depth.
std::string random_expr(std::mt19937& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 3 : 11);
  std::uniform_real_distribution<double> c(0.2, 2.0);
  const int k = pick(rng);
  auto sub = [&] { return random_expr(rng, depth - 1); };
  switch (k) {
    case 0: return "t";
    case 1: return "x";
    case 2: return "p";
    case 3: return std::to_string(c(rng));
    case 4: return "(" + sub() + "+" + sub() + ")";
    case 5: return "(" + sub() + "-" + sub() + ")";
    case 6: return "(" + sub() + "*" + sub() + ")";
    case 7: return "(" + sub() + "/(1.5+" + sub() + "^2))";
    case 8: return "sin(" + sub() + ")";
    case 9: return "cos(" + sub() + ")";
    case 10: return "exp(0.3*" + sub() + ")";
    default: return "tanh(" + sub() + ")^" + std::to_string(std::uniform_int_distribution<int>(1, 3)(rng));
  }
}

TEST(Property, DualGradientsMatchCentralDifferences) {
  std::mt19937 rng(20240611);
  std::uniform_real_distribution<double> pt(-1.5, 1.5);
  const double h = 1e-6;
  for (int n = 0; n < 100; ++n) {
    const auto e = Expression::parse(random_expr(rng, 4));
    const double t = pt(rng), x = pt(rng), p = pt(rng);
    const auto g = e.eval_with_grad(t, x, p);
    const double fdt = (e.eval(t + h, x, p) - e.eval(t - h, x, p)) / (2 * h);
    const double fdx = (e.eval(t, x + h, p) - e.eval(t, x - h, p)) / (2 * h);
    const double fdp = (e.eval(t, x, p + h) - e.eval(t, x, p - h)) / (2 * h);
    EXPECT_LE(std::fabs(g.dt - fdt), 1e-6 * (1 + std::fabs(g.dt))) << e.source();
    EXPECT_LE(std::fabs(g.dx - fdx), 1e-6 * (1 + std::fabs(g.dx))) << e.source();
    EXPECT_LE(std::fabs(g.dp - fdp), 1e-6 * (1 + std::fabs(g.dp))) << e.source();
    EXPECT_EQ(g.value, e.eval(t, x, p));
  }
}

TEST(Property, PrintRoundTripEvaluatesIdentically) {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> pt(-2.0, 2.0);
  for (int n = 0; n < 100; ++n) {
    const auto e = Expression::parse(random_expr(rng, 4));
    const auto back = Expression::parse(e.print());
    for (int k = 0; k < 5; ++k) {
      const double t = pt(rng), x = pt(rng), p = pt(rng);
      EXPECT_EQ(e.eval(t, x, p), back.eval(t, x, p)) << e.source() << " vs " << e.print();
    }
  }
}
