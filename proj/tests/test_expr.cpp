#include <doctest.h>

#include <cmath>
#include <random>

#include "blowup/expr.hpp"
#include "blowup/rng.hpp"

using blowup::expr::Ast;
using blowup::expr::Bindings;

namespace {

// independent oracle: central finite difference with step 1e-5
double central_diff(const Ast& ast, double x, const Bindings& b = {}) {
  const double h = 1e-5;
  return (ast.eval(x + h, b) - ast.eval(x - h, b)) / (2.0 * h);
}

}  // namespace

TEST_CASE("parse and evaluate basic arithmetic") {
  CHECK(Ast::parse("x^2").eval(3.0) == doctest::Approx(9.0));
  CHECK(Ast::parse("1 + x^2").eval(2.0) == doctest::Approx(5.0));
  CHECK(Ast::parse("exp(0)").eval(123.0) == doctest::Approx(1.0));
  CHECK(Ast::parse("tan(x)").eval(M_PI / 4.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(Ast::parse("2*x + 3/x").eval(1.0) == doctest::Approx(5.0));
  CHECK(Ast::parse("pi").eval(0.0) == doctest::Approx(M_PI));
}

TEST_CASE("precedence and associativity") {
  // ^ binds tighter than unary minus
  CHECK(Ast::parse("-x^2").eval(3.0) == doctest::Approx(-9.0));
  // right-associative power
  CHECK(Ast::parse("x^2^3").eval(2.0) == doctest::Approx(256.0));
  CHECK(Ast::parse("2 - 3 - 4").eval(0.0) == doctest::Approx(-5.0));
  CHECK(Ast::parse("2*3^2").eval(0.0) == doctest::Approx(18.0));
}

TEST_CASE("unknown identifiers are rejected") {
  CHECK_THROWS_AS(Ast::parse("kappa*sqrt(x)"), blowup::expr::ParseError);
  CHECK_NOTHROW(Ast::parse("kappa*sqrt(x)", {"kappa"}));
  CHECK_THROWS_AS(Ast::parse("y + 1"), blowup::expr::ParseError);
  CHECK_THROWS_AS(Ast::parse(""), blowup::expr::ParseError);
  CHECK_THROWS_AS(Ast::parse("1 +"), blowup::expr::ParseError);
  CHECK_THROWS_AS(Ast::parse("(1+x"), blowup::expr::ParseError);
}

TEST_CASE("parse errors carry positions") {
  try {
    Ast::parse("x + foo");
    FAIL("expected ParseError");
  } catch (const blowup::expr::ParseError& e) {
    CHECK(e.position == 4);
  }
}

TEST_CASE("domain errors are values") {
  auto r = Ast::parse("1/x").eval_checked(0.0);
  CHECK_FALSE(r.ok);
  CHECK(r.fault != nullptr);
  r = Ast::parse("log(x)").eval_checked(-1.0);
  CHECK_FALSE(r.ok);
  r = Ast::parse("x^(-1)").eval_checked(0.0);
  CHECK_FALSE(r.ok);
  r = Ast::parse("sqrt(x)").eval_checked(-2.0);
  CHECK_FALSE(r.ok);
  CHECK_THROWS_AS(Ast::parse("1/x").eval(0.0), blowup::EvalDomainError);
}

TEST_CASE("parameters bind and evaluate") {
  Ast f = Ast::parse("kappa*x^2", {"kappa"});
  CHECK(f.eval(2.0, {{"kappa", 3.0}}) == doctest::Approx(12.0));
  auto unbound = f.eval_checked(2.0);
  CHECK_FALSE(unbound.ok);
  Ast bound = f.bind({{"kappa", 3.0}});
  CHECK(bound.eval(2.0) == doctest::Approx(12.0));
  CHECK(bound.compile()(2.0) == doctest::Approx(12.0));
}

TEST_CASE("derivatives of simple forms") {
  CHECK(Ast::parse("x^2").derivative().eval(3.0) == doctest::Approx(6.0));
  CHECK(Ast::parse("1 + x^2").derivative().eval(2.0) == doctest::Approx(4.0));
  Ast t = Ast::parse("tan(x)");
  CHECK(t.derivative().eval(0.3) ==
        doctest::Approx(central_diff(t, 0.3)).epsilon(1e-6));
}

namespace {

// random AST generator for the property suite
blowup::expr::Ast random_ast(std::mt19937_64& gen, int depth) {
  using blowup::expr::Ast;
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 2 : 9);
  std::uniform_real_distribution<double> coef(0.2, 3.0);
  auto sub = [&](int d) { return random_ast(gen, d); };
  char buf[64];
  switch (pick(gen)) {
    case 0:
      std::snprintf(buf, sizeof(buf), "%.6f", coef(gen));
      return Ast::parse(buf);
    case 1:
    case 2:
      return Ast::parse("x");
    default: {
      std::uniform_int_distribution<int> op(0, 8);
      const Ast a = sub(depth - 1);
      const Ast b = sub(depth - 1);
      switch (op(gen)) {
        case 0: return Ast::parse("(" + a.to_string() + ")+(" + b.to_string() + ")");
        case 1: return Ast::parse("(" + a.to_string() + ")-(" + b.to_string() + ")");
        case 2: return Ast::parse("(" + a.to_string() + ")*(" + b.to_string() + ")");
        case 3: return Ast::parse("(" + a.to_string() + ")/(1+abs(" + b.to_string() + "))");
        case 4: return Ast::parse("sin(" + a.to_string() + ")");
        case 5: return Ast::parse("cos(" + a.to_string() + ")");
        case 6: return Ast::parse("exp(sin(" + a.to_string() + "))");
        case 7: return Ast::parse("sqrt(1+(" + a.to_string() + ")^2)");
        default: return Ast::parse("arctan(" + a.to_string() + ")");
      }
    }
  }
}

}  // namespace

TEST_CASE("property: symbolic derivative tracks finite differences") {
  std::mt19937_64 gen(20240811u);
  std::uniform_real_distribution<double> xs(-2.0, 2.0);
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    const Ast ast = random_ast(gen, 3);
    const Ast d = ast.derivative();
    for (int j = 0; j < 20; ++j) {
      const double x = xs(gen);
      const auto v = ast.eval_checked(x);
      const auto dv = d.eval_checked(x);
      const auto vp = ast.eval_checked(x + 1e-5);
      const auto vm = ast.eval_checked(x - 1e-5);
      if (!v.ok || !dv.ok || !vp.ok || !vm.ok) continue;  // singular sample
      const double fd = (vp.value - vm.value) / 2e-5;
      if (std::fabs(fd) > 1e6) continue;  // finite differences unusable here
      CHECK(std::fabs(dv.value - fd) <= 1e-4 * (1.0 + std::fabs(dv.value)));
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("property: print then re-parse evaluates identically") {
  std::mt19937_64 gen(777u);
  std::uniform_real_distribution<double> xs(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const Ast ast = random_ast(gen, 3);
    const Ast round = Ast::parse(ast.to_string());
    for (int j = 0; j < 10; ++j) {
      const double x = xs(gen);
      const auto a = ast.eval_checked(x);
      const auto b = round.eval_checked(x);
      REQUIRE(a.ok == b.ok);
      if (a.ok) CHECK(a.value == doctest::Approx(b.value).epsilon(1e-14));
    }
  }
}

TEST_CASE("derivative of catalog-style expressions") {
  // the forms the diffusion catalog feeds through the differentiator
  for (const char* src : {"-x^2", "x^(3/2)", "kappa*sqrt(x)", "1+x^2",
                          "(delta-1)/(2*x)", "exp(beta*x)", "nu+(3/4)*sqrt(x)"}) {
    Ast ast = Ast::parse(src, {"kappa", "delta", "beta", "nu"})
                  .bind({{"kappa", 2.0}, {"delta", 0.5}, {"beta", 1.0}, {"nu", -0.3}});
    Ast d = ast.derivative();
    for (double x : {0.3, 0.9, 1.7, 4.2}) {
      const double fd = central_diff(ast, x);
      CHECK(d.eval(x) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("counter rng is reproducible and well distributed") {
  using namespace blowup::rng;
  CHECK(philox(1, 2, 3).a == philox(1, 2, 3).a);
  CHECK(philox(1, 2, 3).a != philox(1, 2, 4).a);
  CHECK(philox(1, 2, 3).a != philox(1, 3, 3).a);
  CHECK(philox(2, 2, 3).a != philox(1, 2, 3).a);
  // moments of the normal draws
  double sum = 0.0, sumsq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(42, 7, i);
    sum += z;
    sumsq += z * z;
  }
  CHECK(std::fabs(sum / n) < 0.01);
  CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.01));
  // inverse normal cdf hits known quantiles
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0));
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(inverse_normal_cdf(0.841344746068543) == doctest::Approx(1.0).epsilon(1e-9));
}
