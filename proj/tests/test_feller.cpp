#include <doctest.h>

#include <cmath>

#include "blowup/feller.hpp"
#include "blowup/model.hpp"

using namespace blowup;
using feller::Classification;
using feller::Method;
using feller::Side;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

DiffusionSpec brownian() {
  return model::make_spec({-kInf, kInf}, expr::Ast::parse("1"), expr::Ast::parse("0"),
                          true, "brownian");
}

// closed form of the test function for the quadratic-dispersion model
// with drift -x and anchor 1 (obtained by direct integration)
double v_reciprocal_bm(double x) {
  return 0.5 - 0.5 / (x * x) - 1.0 / x + 1.0 / (x * x);
}

}  // namespace

TEST_CASE("feller_v vanishes at the anchor") {
  auto spec = model::builtin_catalog("reciprocal_bm");
  CHECK(feller::feller_v(spec, 1.3, 1.3) == 0.0);
}

TEST_CASE("feller_v matches the integrated closed form") {
  auto spec = model::builtin_catalog("reciprocal_bm");
  CHECK(feller::feller_v(spec, 1.0, 2.0) ==
        doctest::Approx(v_reciprocal_bm(2.0)).epsilon(1e-6));
  CHECK(feller::feller_v(spec, 1.0, 2.0) == doctest::Approx(0.125).epsilon(1e-5));
  CHECK(feller::feller_v(spec, 1.0, 8.0) ==
        doctest::Approx(v_reciprocal_bm(8.0)).epsilon(1e-6));
  // toward the left endpoint the test function blows up like (1-x)^2/(2x^2)
  CHECK(feller::feller_v(spec, 1.0, 0.125) ==
        doctest::Approx(v_reciprocal_bm(0.125)).epsilon(1e-6));
}

TEST_CASE("feller_v for driftless unit dispersion is x^2/2") {
  auto bm = brownian();
  CHECK(feller::feller_v(bm, 0.0, 2.0) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(feller::feller_v(bm, 0.0, -3.0) == doctest::Approx(4.5).epsilon(1e-8));
}

TEST_CASE("feller_v is nonnegative and grows away from the anchor") {
  auto spec = model::builtin_catalog("quartic_tan", {{"nu", 0.4}});
  double prev = 0.0;
  for (double x : {0.5, 1.0, 2.0, 4.0}) {
    const double v = feller::feller_v(spec, 0.0, x);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
  prev = 0.0;
  for (double x : {-0.5, -1.0, -2.0, -4.0}) {
    const double v = feller::feller_v(spec, 0.0, x);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("boundary_limit on the quadratic-dispersion model") {
  auto spec = model::builtin_catalog("reciprocal_bm");
  auto ladder = model::default_ladder(spec.interval, 40, 1.0);
  auto right = feller::boundary_limit(spec, 1.0, Side::right, ladder);
  CHECK(right.classification == Classification::explosive);
  CHECK(right.v_limit == doctest::Approx(0.5).epsilon(1e-3));
  auto left = feller::boundary_limit(spec, 1.0, Side::left, ladder);
  CHECK(left.classification == Classification::non_explosive);
  CHECK(std::isinf(left.v_limit));
}

TEST_CASE("boundary_limit on Brownian motion finds both sides inaccessible") {
  auto bm = brownian();
  auto ladder = model::default_ladder(bm.interval, 40, 0.0);
  CHECK(feller::boundary_limit(bm, 0.0, Side::left, ladder).classification ==
        Classification::non_explosive);
  CHECK(feller::boundary_limit(bm, 0.0, Side::right, ladder).classification ==
        Classification::non_explosive);
}

TEST_CASE("classify dispatches the structural shortcuts") {
  auto rec = model::builtin_catalog("reciprocal_bm");
  auto ladder = model::default_ladder(rec.interval, 40);
  auto report = feller::classify(rec, ladder);
  // b = s'/2 holds for this model, so the shortcut route answers
  CHECK(report.left.method == Method::prop21_i);
  CHECK(report.overall == feller::ExplosionReport::Overall::explosive);
  CHECK(report.left.classification == Classification::non_explosive);
  CHECK(report.right.classification == Classification::explosive);
}

TEST_CASE("classify driftless quadratic dispersion as conservative") {
  // s = -x^2, b = 0 on (0,inf): int_0^1 z/s^2 = int z^-3 diverges
  auto spec = model::make_spec({0.0, kInf}, expr::Ast::parse("-x^2"),
                               expr::Ast::parse("0"), true, "driftless-quadratic");
  auto report = feller::classify(spec, model::default_ladder(spec.interval, 40));
  CHECK(report.overall == feller::ExplosionReport::Overall::no_explosion);
  CHECK(report.left.method == Method::prop21_ii);
}

TEST_CASE("classify Bessel-type dimensions") {
  auto bes1 = model::builtin_catalog("bessel", {{"delta", 1.0}});
  auto report = feller::classify(bes1, model::default_ladder(bes1.interval, 40));
  CHECK(report.left.classification == Classification::explosive);
  CHECK(report.right.classification == Classification::non_explosive);
  CHECK(report.overall == feller::ExplosionReport::Overall::explosive);

  auto bes0 = model::builtin_catalog("bessel", {{"delta", 0.0}});
  auto report0 = feller::classify(bes0, model::default_ladder(bes0.interval, 40));
  CHECK(report0.left.classification == Classification::explosive);
  CHECK(report0.right.classification == Classification::non_explosive);
}

TEST_CASE("classify the h-transform family through its tail integral") {
  // b = s/x with s = x^(3/2): int_1^inf z/z^3 dz converges, so the right
  // boundary is reached
  auto spec = model::builtin_catalog("htransform_power", {{"p", 1.5}});
  auto report = feller::classify(spec, model::default_ladder(spec.interval, 40));
  CHECK(report.right.method == Method::prop21_iii);
  CHECK(report.right.classification == Classification::explosive);
  CHECK(report.left.classification == Classification::non_explosive);
}

TEST_CASE("natural-scale boundary criteria on hand-made dispersions") {
  auto ladder_unit = model::default_ladder({0.0, 1.0}, 6);
  // s(y) = y on (0,1), right side: (1-y)/y^2 integrable at 1
  auto s_y = model::make_spec({0.0, 1.0}, expr::Ast::parse("x"),
                              expr::Ast::parse("0"), true, "scale-y");
  CHECK(feller::natural_scale_boundary_test(s_y, Side::right, ladder_unit, 2) ==
        quad::TailVerdict::finite);
  // s(y) = 1 - y vanishes at the right endpoint only, which lies outside
  // the open interval; the integrand becomes 1/(1-y), a log divergence
  auto s_1my = model::make_spec({0.0, 1.0}, expr::Ast::parse("1-x"),
                                expr::Ast::parse("0"), true, "scale-1my");
  CHECK(feller::natural_scale_boundary_test(s_1my, Side::right, ladder_unit, 2) ==
        quad::TailVerdict::divergent);
  // s(y) = sqrt(1-y): constant integrand, finite
  auto s_sqrt = model::make_spec({0.0, 1.0}, expr::Ast::parse("sqrt(1-x)"),
                                 expr::Ast::parse("0"), true, "scale-sqrt");
  CHECK(feller::natural_scale_boundary_test(s_sqrt, Side::right, ladder_unit, 2) ==
        quad::TailVerdict::finite);
}

TEST_CASE("shortcut verdicts agree with the general integral route") {
  // force the general route by clearing the structure flags
  for (const char* name : {"reciprocal_bm", "htransform_power", "affine_variance"}) {
    auto spec = model::builtin_catalog(name);
    auto ladder = model::default_ladder(spec.interval, 40);
    auto shortcut = feller::classify(spec, ladder);
    DiffusionSpec general = spec;
    general.half_s_prime_drift = false;
    general.s_over_x_drift = false;
    general.driftless = false;
    auto direct = feller::classify(general, ladder);
    CHECK(direct.left.classification == shortcut.left.classification);
    CHECK(direct.right.classification == shortcut.right.classification);
    CHECK(direct.left.method == Method::general_integral);
  }
}

TEST_CASE("classification is invariant under the anchor choice") {
  auto spec = model::builtin_catalog("cubic_drift", {{"nu", 0.0}});
  feller::ExplosionReport reference;
  bool first = true;
  for (double anchor : {0.5, 1.0, 3.0}) {
    auto ladder = model::default_ladder(spec.interval, 40, anchor);
    auto report = feller::classify(spec, ladder);
    if (first) {
      reference = report;
      first = false;
    } else {
      CHECK(report.left.classification == reference.left.classification);
      CHECK(report.right.classification == reference.right.classification);
      CHECK(report.overall == reference.overall);
    }
  }
}

TEST_CASE("classify the exponential-drift model through the general route") {
  auto spec = model::builtin_catalog("exp_drift", {{"beta", 1.0}});
  auto ladder = model::default_ladder(spec.interval, 40);
  auto report = feller::classify(spec, ladder);
  CHECK(report.left.method == Method::general_integral);
  CHECK(report.left.classification == Classification::non_explosive);
  CHECK(report.right.classification == Classification::explosive);
  CHECK(report.overall == feller::ExplosionReport::Overall::explosive);
}
