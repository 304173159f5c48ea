#include <doctest.h>

#include <cmath>

#include "blowup/model.hpp"
#include "blowup/rng.hpp"
#include "blowup/transform.hpp"

using namespace blowup;
using transform::LampertiFrame;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

std::vector<double> uniform_times(double t_max, double dt) {
  std::vector<double> t;
  for (double v = 0.0; v < t_max + 0.5 * dt; v += dt) t.push_back(v);
  return t;
}

// deterministic test path with Brownian-like wiggle
std::vector<double> wiggle_path(const std::vector<double>& times, double amp) {
  std::vector<double> w(times.size());
  for (size_t i = 0; i < times.size(); ++i)
    w[i] = amp * (std::sin(3.1 * times[i]) + 0.4 * std::sin(17.0 * times[i]));
  return w;
}

}  // namespace

TEST_CASE("lamperti map on power dispersion") {
  // s = x^(3/2), anchor 1: integral of z^(-3/2) from 1 to 4 equals 1
  auto spec = model::builtin_catalog("htransform_power", {{"p", 1.5}});
  LampertiFrame frame(spec, 1.0, 0.01, 64.0);
  CHECK(frame.map(1.0) == doctest::Approx(0.0));
  CHECK(frame.map(4.0) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("lamperti map on quadratic-plus-one dispersion is arctan") {
  auto spec = model::builtin_catalog("quartic_tan", {{"nu", 0.0}});
  LampertiFrame frame(spec, 0.0, -30.0, 30.0);
  CHECK(frame.map(1.0) == doctest::Approx(M_PI / 4.0).epsilon(1e-8));
  CHECK(frame.inverse(M_PI / 4.0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(frame.inverse(0.0) == doctest::Approx(0.0));
}

TEST_CASE("lamperti map is strictly increasing and invertible") {
  for (const char* name : {"reciprocal_bm", "cubic_drift", "affine_variance"}) {
    auto spec = model::builtin_catalog(name);
    LampertiFrame frame(spec, 1.0, 0.05, 20.0);
    double prev = -kInf;
    for (int i = 0; i <= 200; ++i) {
      const double x = 0.05 + (20.0 - 0.05) * i / 200.0;
      const double y = frame.map(x);
      CHECK(y > prev);
      prev = y;
      CHECK(frame.inverse(y) == doctest::Approx(x).epsilon(1e-8));
    }
  }
}

TEST_CASE("transformed drift of the recognized families") {
  // b = s'/2 cancels exactly
  auto rec = model::builtin_catalog("reciprocal_bm");
  LampertiFrame rf(rec, 1.0, 0.05, 40.0);
  for (double y : {-3.0, 0.0, 0.5})
    CHECK(rf.unit_drift(y) == doctest::Approx(0.0).epsilon(1e-10));

  auto aff = model::builtin_catalog("affine_variance", {{"kappa", 2.0}});
  LampertiFrame af(aff, 1.0, 0.01, 30.0);
  for (double y : {-0.5, 0.0, 2.0})
    CHECK(af.unit_drift(y) == doctest::Approx(0.0).epsilon(1e-10));

  // quartic family: the drift collapses to the constant parameter
  auto quart = model::builtin_catalog("quartic_tan", {{"nu", 0.7}});
  LampertiFrame qf(quart, 0.0, -50.0, 50.0);
  for (double y : {-1.3, 0.0, 0.9, 1.4})
    CHECK(qf.unit_drift(y) == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("mapped endpoints are infinite exactly for conservative dispersions") {
  auto bm = model::make_spec({-kInf, kInf}, expr::Ast::parse("1"),
                             expr::Ast::parse("0"), true, "brownian");
  LampertiFrame bf(bm, 0.0, -50.0, 50.0);
  CHECK(std::isinf(bf.mapped_left()));
  CHECK(std::isinf(bf.mapped_right()));

  // quadratic dispersion: the right endpoint maps to a finite value
  auto rec = model::builtin_catalog("reciprocal_bm");
  LampertiFrame rf(rec, 1.0, 0.05, 50.0);
  CHECK(std::isinf(rf.mapped_left()));
  CHECK(std::isfinite(rf.mapped_right()));
  CHECK(rf.mapped_right() == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("sensitivity of the inverse map to the anchor") {
  // d/dc of the inverse at fixed w equals |s|(theta)/|s|(c)
  auto spec = model::builtin_catalog("cubic_drift", {{"nu", 0.3}});
  const double dc = 1e-5;
  for (double c : {0.8, 1.5, 2.5, 4.0}) {
    LampertiFrame base(spec, c, 0.05, 40.0);
    LampertiFrame up(spec, c + dc, 0.05, 40.0);
    LampertiFrame down(spec, c - dc, 0.05, 40.0);
    for (double w : {-0.4, -0.1, 0.2, 0.45, 0.6}) {
      const double theta = base.inverse(w);
      const double fd = (up.inverse(w) - down.inverse(w)) / (2.0 * dc);
      const double expected = std::fabs(spec.s(theta)) / std::fabs(spec.s(c));
      CHECK(fd == doctest::Approx(expected).epsilon(1e-4));
    }
  }
}

TEST_CASE("pathwise solution with constant subindex") {
  // quadratic dispersion with drift -x: mu vanishes, X = 1/(W + 1/xi)
  auto spec = model::builtin_catalog("reciprocal_bm");
  LampertiFrame frame(spec, 1.0, 1e-3, 1e3);
  const double xi = 1.0;
  auto mu = [&spec](double x) { return spec.b(x) - 0.5 * spec.s_prime(x); };
  auto times = uniform_times(1.0, 1e-3);
  auto w = wiggle_path(times, 0.45);
  auto path = transform::dds_path(frame, mu, times, w, xi);
  REQUIRE_FALSE(path.exited);
  REQUIRE(path.x.size() == times.size());
  for (size_t i = 0; i < times.size(); ++i) {
    const double expected = 1.0 / (w[i] + 1.0 / xi);
    CHECK(path.x[i] == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("pathwise solution detects the exit and bisects its time") {
  auto spec = model::builtin_catalog("reciprocal_bm");
  LampertiFrame frame(spec, 1.0, 1e-3, 1e3);
  auto mu = [](double) { return 0.0; };
  // ramp that drives W toward -1/xi = -1 within the horizon
  std::vector<double> times = uniform_times(2.0, 1e-3);
  std::vector<double> w(times.size());
  for (size_t i = 0; i < w.size(); ++i) w[i] = -0.8 * times[i];
  auto path = transform::dds_path(frame, mu, times, w, 1.0);
  REQUIRE(path.exited);
  // the state leaves the working range once W reaches -(1 - 1e-3)
  const double w_exit = -(1.0 - 1e-3);
  CHECK(path.exit_time == doctest::Approx(w_exit / -0.8).epsilon(1e-4));
}

TEST_CASE("pathwise solution of the quartic family is a shifted tangent") {
  const double nu = 0.6, xi = 0.3;
  auto spec = model::builtin_catalog("quartic_tan", {{"nu", nu}});
  LampertiFrame frame(spec, 0.0, -60.0, 60.0);
  auto mu = [&spec](double x) { return spec.b(x) - 0.5 * spec.s_prime(x); };
  auto times = uniform_times(1.0, 1e-4);
  auto w = wiggle_path(times, 0.5);
  auto path = transform::dds_path(frame, mu, times, w, xi);
  REQUIRE_FALSE(path.exited);
  for (size_t i = 0; i < times.size(); i += 97) {
    const double expected = std::tan(w[i] + nu * times[i] + std::atan(xi));
    CHECK(path.x[i] == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("pathwise solver refuses visibly non-Lipschitz drift corrections") {
  auto spec = model::builtin_catalog("quartic_tan", {{"nu", 0.0}});
  LampertiFrame frame(spec, 0.0, -2.0, 2.0);
  // square-root kink placed exactly on a probe point of the working range
  const double kink = -2.0 + 4.0 * 12.0 / 25.0;
  auto bad_mu = [kink](double x) { return std::sqrt(std::fabs(x - kink)); };
  auto times = uniform_times(0.1, 1e-3);
  std::vector<double> w(times.size(), 0.0);
  CHECK_THROWS_AS(transform::dds_path(frame, bad_mu, times, w, 0.0), ConfigError);
}

TEST_CASE("measure-change weights on trivial drifts") {
  auto bm = model::make_spec({-kInf, kInf}, expr::Ast::parse("1"),
                             expr::Ast::parse("0"), true, "brownian");
  auto times = uniform_times(1.0, 0.01);
  std::vector<double> states(times.size(), 0.3);
  auto fk = transform::feynman_kac_weight(bm, times, states, true);
  CHECK(fk.weight == doctest::Approx(1.0));
  CHECK(fk.survived);
  auto dead = transform::feynman_kac_weight(bm, times, states, false);
  CHECK(dead.weight == 0.0);
}

TEST_CASE("stochastic-exponential weight reproduces the closed exponent") {
  auto drifted = model::make_spec({-kInf, kInf}, expr::Ast::parse("1"),
                                  expr::Ast::parse("1"), true, "unit-drift");
  auto times = uniform_times(1.0, 1e-3);
  auto w = wiggle_path(times, 0.7);
  std::vector<double> states(times.size());
  std::vector<double> incs(times.size() - 1);
  for (size_t i = 0; i < times.size(); ++i) states[i] = 0.1 + w[i];
  for (size_t i = 0; i + 1 < times.size(); ++i) incs[i] = w[i + 1] - w[i];
  auto g = transform::girsanov_weight(drifted, times, states, incs, true);
  CHECK(g.weight == doctest::Approx(std::exp(w.back() - 0.5)).epsilon(1e-12));
}

TEST_CASE("weight for the h-transform family is the terminal ratio") {
  auto spec = model::builtin_catalog("htransform_power", {{"p", 1.5}});
  auto times = uniform_times(1.0, 0.01);
  std::vector<double> states(times.size());
  for (size_t i = 0; i < times.size(); ++i)
    states[i] = 1.0 + 0.5 * std::sin(times[i]);  // an arbitrary positive path
  auto fk = transform::feynman_kac_weight(spec, times, states, true);
  // V vanishes and F = log, so the weight is X(T)/X(0)
  CHECK(fk.weight == doctest::Approx(states.back() / states.front()).epsilon(1e-8));
}

TEST_CASE("both weight routes agree pathwise on matched driftless paths") {
  const double nu = 0.4;
  auto spec = model::builtin_catalog("quartic_tan", {{"nu", nu}});
  const double dt = 1e-4, t_max = 1.0;
  auto times = uniform_times(t_max, dt);
  for (uint64_t path = 0; path < 5; ++path) {
    std::vector<double> states(times.size()), incs(times.size() - 1);
    states[0] = 0.0;
    for (size_t i = 0; i + 1 < times.size(); ++i) {
      incs[i] = std::sqrt(dt) * rng::standard_normal(2024, path, i);
      states[i + 1] = states[i] + spec.s(states[i]) * incs[i];
    }
    auto fk = transform::feynman_kac_weight(spec, times, states, true);
    auto gir = transform::girsanov_weight(spec, times, states, incs, true);
    REQUIRE(fk.weight > 0.0);
    CHECK(std::fabs(fk.weight - gir.weight) <= 2e-2 * fk.weight);
  }
}

TEST_CASE("stochastic-exponential weights average to one for conservative drift") {
  auto drifted = model::make_spec({-kInf, kInf}, expr::Ast::parse("1"),
                                  expr::Ast::parse("1"), true, "unit-drift");
  const double dt = 0.01, t_max = 1.0;
  auto times = uniform_times(t_max, dt);
  const long n_paths = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (long p = 0; p < n_paths; ++p) {
    std::vector<double> states(times.size()), incs(times.size() - 1);
    states[0] = 0.0;
    for (size_t i = 0; i + 1 < times.size(); ++i) {
      incs[i] = std::sqrt(dt) * rng::standard_normal(7, p, i);
      states[i + 1] = states[i] + incs[i];
    }
    auto g = transform::girsanov_weight(drifted, times, states, incs, true);
    sum += g.weight;
    sum_sq += g.weight * g.weight;
  }
  const double mean = sum / n_paths;
  const double sd = std::sqrt((sum_sq - n_paths * mean * mean) / (n_paths - 1));
  const double se = sd / std::sqrt(static_cast<double>(n_paths));
  CHECK(std::fabs(mean - 1.0) <= 3.0 * se);
}
