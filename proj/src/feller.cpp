#include "blowup/feller.hpp"

#include <algorithm>
#include <cmath>

#include "blowup/errors.hpp"

namespace blowup::feller {

namespace {

constexpr double kDivergenceThreshold = 1e8;
constexpr double kRelTol = 1e-4;

// NaN-signalling integrand wrappers
quad::Fn make_f(const DiffusionSpec& spec) {
  return [&spec](double u) {
    const auto bv = spec.b_ast.eval_checked(u);
    const auto sv = spec.s_ast.eval_checked(u);
    if (!bv.ok || !sv.ok || sv.value == 0.0)
      return std::numeric_limits<double>::quiet_NaN();
    return bv.value / sv.value;
  };
}

quad::Fn make_inv_s2(const DiffusionSpec& spec) {
  return [&spec](double z) {
    const auto sv = spec.s_ast.eval_checked(z);
    if (!sv.ok || sv.value == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return 1.0 / (sv.value * sv.value);
  };
}

// J(z) = int_z^x exp(-2 int_z^y f(u) du) dy, accumulated as the coupled
// system G' = f, J' = exp(-2G) with adaptive step-doubled 4th-order
// steps.  Running the exponent from zero at z avoids the catastrophic
// cancellation a tabulated antiderivative suffers when F grows huge, and
// the step controller glides through dead zones where the integrand has
// underflowed.
double inner_exponential_integral(const quad::Fn& f, double z, double x) {
  const double width = std::fabs(x - z);
  if (width == 0.0) return 0.0;
  const double d = (x > z) ? 1.0 : -1.0;

  auto rhs = [&](double u, double g) {
    const double fy = f(z + d * u);
    const double e = -2.0 * g;
    const double j = e > 700.0 ? std::exp(700.0) : (e < -745.0 ? 0.0 : std::exp(e));
    return std::pair<double, double>(d * fy, j);  // (dG/du, dJ/du)
  };
  auto rk4 = [&](double u, double g, double j, double h, double& g_out, double& j_out) {
    const auto k1 = rhs(u, g);
    const auto k2 = rhs(u + 0.5 * h, g + 0.5 * h * k1.first);
    const auto k3 = rhs(u + 0.5 * h, g + 0.5 * h * k2.first);
    const auto k4 = rhs(u + h, g + h * k3.first);
    g_out = g + h / 6.0 * (k1.first + 2 * k2.first + 2 * k3.first + k4.first);
    j_out = j + h / 6.0 * (k1.second + 2 * k2.second + 2 * k3.second + k4.second);
  };

  const double f0 = f(z);
  if (std::isnan(f0))
    throw EvalDomainError("feller test function: singular coefficient at z=" +
                          std::to_string(z));
  double u = 0.0, G = 0.0, J = 0.0;
  double h = std::min(width, 0.02 / (1.0 + 2.0 * std::fabs(f0)));
  long steps = 0;
  while (u < width) {
    if (++steps > 2000000)
      throw NumericError("feller test function: inner integration stalled");
    h = std::min(h, width - u);
    double g1, j1, gh, jh, g2, j2;
    rk4(u, G, J, h, g1, j1);
    rk4(u, G, J, 0.5 * h, gh, jh);
    rk4(u + 0.5 * h, gh, jh, 0.5 * h, g2, j2);
    if (std::isnan(g2) || std::isnan(j2))
      throw EvalDomainError("feller test function: singular coefficient inside");
    const double err_j = std::fabs(j2 - j1);
    const double err_g = std::fabs(g2 - g1);
    const double tol_j = 1e-10 * (std::fabs(j2) + 1e-3 * width) + 1e-300;
    const double tol_g = 1e-8 * (1.0 + std::fabs(g2));
    if (err_j <= tol_j && err_g <= tol_g) {
      u += h;
      G = g2;
      J = j2;
      const double grow = std::min(4.0, 0.9 * std::pow(tol_j / (err_j + 1e-300), 0.2));
      h *= std::max(1.05, grow);
    } else {
      h *= 0.5;
      if (h < width * 1e-15)
        throw NumericError("feller test function: step underflow in the inner "
                           "integration");
    }
  }
  return d * J;  // signed, matching the integration orientation
}

// Evaluates v(x) for one fixed anchor.
class VEvaluator {
 public:
  VEvaluator(const DiffusionSpec& spec, double c)
      : c_(c), f_(make_f(spec)), inv_s2_(make_inv_s2(spec)) {}

  double operator()(double x) {
    if (x == c_) return 0.0;
    auto outer = [this, x](double z) {
      const double w = inv_s2_(z);
      if (std::isnan(w)) return w;
      return w * inner_exponential_integral(f_, z, x);
    };
    quad::Options oopt;
    oopt.abs_tol = 1e-9;
    oopt.rel_tol = 1e-8;
    oopt.max_depth = 52;
    quad::Result r = quad::integrate(outer, c_, x, oopt);
    if (r.domain_error)
      throw EvalDomainError("feller test function: coefficient singular inside the interval");
    if (!r.converged && r.error > 1e-4 * std::max(1.0, std::fabs(r.value)))
      throw NumericError("feller test function: quadrature did not converge");
    // both orientations give a nonnegative double integral
    return std::fabs(r.value);
  }

 private:
  double c_;
  quad::Fn f_;
  quad::Fn inv_s2_;
};

double boundary_point(const TruncationLadder& ladder, Side side, int level) {
  return side == Side::left ? ladder.lower(level) : ladder.upper(level);
}

BoundaryVerdict limit_from_values(Side side, std::vector<double> xs,
                                  std::vector<double> vs) {
  BoundaryVerdict verdict;
  verdict.side = side;
  verdict.method = Method::general_integral;
  verdict.evidence_x = std::move(xs);
  verdict.evidence_value = std::move(vs);
  const auto& v = verdict.evidence_value;
  const size_t n = v.size();
  for (size_t i = 2; i < n; ++i) {
    const double inc = v[i] - v[i - 1];
    const double prev_inc = v[i - 1] - v[i - 2];
    // convergence: two consecutive relative increments below tolerance
    const double scale = std::max(std::fabs(v[i]), 1e-300);
    if (std::fabs(inc) <= kRelTol * scale && std::fabs(prev_inc) <= kRelTol * scale) {
      verdict.classification = Classification::explosive;
      verdict.v_limit = v[i];
      return verdict;
    }
    // divergence
    if (v[i] > kDivergenceThreshold && i >= 3) {
      const double d1 = v[i - 2] - v[i - 3];
      const double d2 = v[i - 1] - v[i - 2];
      const double d3 = v[i] - v[i - 1];
      if (d1 <= d2 && d2 <= d3) {
        verdict.classification = Classification::non_explosive;
        verdict.v_limit = std::numeric_limits<double>::infinity();
        return verdict;
      }
    }
  }
  verdict.classification = Classification::undetermined;
  verdict.v_limit = n ? v.back() : std::numeric_limits<double>::quiet_NaN();
  return verdict;
}

BoundaryVerdict shortcut_verdict(Side side, Method method, bool non_explosive,
                                 const quad::TailProbe* probe = nullptr) {
  BoundaryVerdict verdict;
  verdict.side = side;
  verdict.method = method;
  verdict.classification =
      non_explosive ? Classification::non_explosive : Classification::explosive;
  verdict.v_limit = non_explosive ? std::numeric_limits<double>::infinity()
                                  : std::numeric_limits<double>::quiet_NaN();
  if (probe) verdict.evidence_value = probe->partials;
  return verdict;
}

}  // namespace

const char* to_string(Classification c) {
  switch (c) {
    case Classification::explosive: return "explosive";
    case Classification::non_explosive: return "non-explosive";
    case Classification::undetermined: return "undetermined";
  }
  return "?";
}

const char* to_string(Method m) {
  switch (m) {
    case Method::general_integral: return "general_integral";
    case Method::prop21_i: return "prop21_i";
    case Method::prop21_ii: return "prop21_ii";
    case Method::prop21_iii: return "prop21_iii";
    case Method::natural_scale: return "natural_scale";
  }
  return "?";
}

const char* to_string(ExplosionReport::Overall o) {
  switch (o) {
    case ExplosionReport::Overall::no_explosion: return "P(S=inf)=1";
    case ExplosionReport::Overall::explosive: return "P(S<inf)>0";
    case ExplosionReport::Overall::undetermined: return "undetermined";
  }
  return "?";
}

double feller_v(const DiffusionSpec& spec, double c, double x) {
  if (!spec.interval.contains(c) || !spec.interval.contains(x))
    throw ConfigError("feller_v: points must lie inside the state interval");
  VEvaluator v(spec, c);
  return v(x);
}

BoundaryVerdict boundary_limit(const DiffusionSpec& spec, double c, Side side,
                               const TruncationLadder& ladder) {
  VEvaluator v(spec, c);
  std::vector<double> xs, vs;
  for (int level = 1; level <= ladder.depth(); ++level) {
    const double x = boundary_point(ladder, side, level);
    double value;
    try {
      value = v(x);
    } catch (const NumericError&) {
      // coefficients overflowed this deep in the ladder; classify from
      // the evidence gathered so far (undetermined is a legal outcome)
      break;
    }
    xs.push_back(x);
    vs.push_back(value);
    // decide as soon as the evidence suffices
    BoundaryVerdict trial = limit_from_values(side, xs, vs);
    if (trial.classification != Classification::undetermined) return trial;
  }
  return limit_from_values(side, std::move(xs), std::move(vs));
}

quad::TailVerdict natural_scale_boundary_test(const DiffusionSpec& spec, Side side,
                                              const TruncationLadder& ladder, int n) {
  const double endpoint =
      side == Side::left ? spec.interval.left : spec.interval.right;
  if (!std::isfinite(endpoint))
    throw ConfigError("natural-scale boundary test needs a finite endpoint");
  const double start = boundary_point(ladder, side, n);
  auto inv_s2 = make_inv_s2(spec);
  auto integrand = [endpoint, inv_s2](double y) {
    return std::fabs(endpoint - y) * inv_s2(y);
  };
  quad::TailOptions topt;
  topt.levels = 64;
  return quad::probe_improper(integrand, start, endpoint, topt).verdict;
}

ExplosionReport classify(const DiffusionSpec& spec, const TruncationLadder& ladder) {
  ExplosionReport report;
  report.label = spec.label;
  const double c = ladder.anchor;
  const Interval& iv = spec.interval;
  auto inv_s2 = make_inv_s2(spec);

  bool handled = false;
  if (spec.half_s_prime_drift) {
    // b = s'/2: no explosion on a side iff int 1/|s| diverges there
    auto abs_inv_s = [&spec](double z) {
      const auto sv = spec.s_ast.eval_checked(z);
      if (!sv.ok || sv.value == 0.0) return std::numeric_limits<double>::quiet_NaN();
      return 1.0 / std::fabs(sv.value);
    };
    auto left = quad::probe_improper(abs_inv_s, c, iv.left);
    auto right = quad::probe_improper(abs_inv_s, c, iv.right);
    report.left = shortcut_verdict(Side::left, Method::prop21_i,
                                   left.verdict == quad::TailVerdict::divergent, &left);
    report.right = shortcut_verdict(Side::right, Method::prop21_i,
                                    right.verdict == quad::TailVerdict::divergent, &right);
    if (left.verdict == quad::TailVerdict::undetermined)
      report.left.classification = Classification::undetermined;
    if (right.verdict == quad::TailVerdict::undetermined)
      report.right.classification = Classification::undetermined;
    handled = true;
  } else if (spec.driftless) {
    const bool half_line = iv.left == 0.0 && !iv.right_finite();
    // finite endpoints: divergence of int |endpoint - y| / s^2
    auto side_verdict = [&](Side side) {
      const double endpoint = side == Side::left ? iv.left : iv.right;
      if (!std::isfinite(endpoint)) {
        // an infinite side is never reached in natural scale
        return shortcut_verdict(side, half_line ? Method::prop21_ii : Method::natural_scale,
                                true);
      }
      auto integrand = [endpoint, inv_s2](double y) {
        return std::fabs(endpoint - y) * inv_s2(y);
      };
      auto probe = quad::probe_improper(integrand, c, endpoint);
      auto verdict = shortcut_verdict(
          side, half_line ? Method::prop21_ii : Method::natural_scale,
          probe.verdict == quad::TailVerdict::divergent, &probe);
      if (probe.verdict == quad::TailVerdict::undetermined)
        verdict.classification = Classification::undetermined;
      return verdict;
    };
    report.left = side_verdict(Side::left);
    report.right = side_verdict(Side::right);
    handled = true;
  } else if (spec.s_over_x_drift) {
    // b = s/x on (0,inf): origin is inaccessible; infinity is reached
    // iff int_1^inf z/s^2(z) dz converges
    report.left = shortcut_verdict(Side::left, Method::prop21_iii, true);
    auto integrand = [inv_s2](double z) { return z * inv_s2(z); };
    auto probe = quad::probe_improper(integrand, std::max(c, 1.0), iv.right);
    report.right = shortcut_verdict(Side::right, Method::prop21_iii,
                                    probe.verdict == quad::TailVerdict::divergent, &probe);
    if (probe.verdict == quad::TailVerdict::undetermined)
      report.right.classification = Classification::undetermined;
    handled = true;
  }

  if (!handled) {
    report.left = boundary_limit(spec, c, Side::left, ladder);
    report.right = boundary_limit(spec, c, Side::right, ladder);
  }

  const auto lc = report.left.classification;
  const auto rc = report.right.classification;
  if (lc == Classification::non_explosive && rc == Classification::non_explosive)
    report.overall = ExplosionReport::Overall::no_explosion;
  else if (lc == Classification::explosive || rc == Classification::explosive)
    report.overall = ExplosionReport::Overall::explosive;
  else
    report.overall = ExplosionReport::Overall::undetermined;
  return report;
}

}  // namespace blowup::feller
