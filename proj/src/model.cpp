#include "blowup/model.hpp"

#include <algorithm>
#include <cmath>

#include "blowup/errors.hpp"
#include "blowup/quadrature.hpp"

namespace blowup {

double DiffusionSpec::s_prime(double x) const {
  if (!s_deriv_ast)
    throw ConfigError("spec '" + label + "' was not declared with differentiable s");
  return s_deriv_ast->eval(x);
}

double DiffusionSpec::f(double x) const {
  const double sv = s(x);
  if (sv == 0.0) throw EvalDomainError("dispersion vanished at x=" + std::to_string(x));
  return b(x) / sv;
}

double DiffusionSpec::f_prime(double x) const {
  const double sv = s(x);
  if (sv == 0.0) throw EvalDomainError("dispersion vanished at x=" + std::to_string(x));
  return (b_prime(x) * sv - b(x) * s_prime(x)) / (sv * sv);
}

namespace model {

double default_anchor(const Interval& iv) {
  if (iv.left_finite() && iv.right_finite()) return 0.5 * (iv.left + iv.right);
  return std::max(iv.left + 1.0, std::min(iv.right - 1.0, 0.0));
}

std::vector<double> probe_points(const Interval& iv, int n) {
  std::vector<double> pts;
  pts.reserve(n);
  if (iv.left_finite() && iv.right_finite()) {
    const double w = iv.right - iv.left;
    for (int i = 0; i < n; ++i) {
      const double t = (i + 0.7) / (n + 0.4);  // irrational-ish offsets, avoids midpoint
      pts.push_back(iv.left + t * w);
    }
    return pts;
  }
  const double c = default_anchor(iv);
  const int half = n / 2;
  for (int i = 0; i < n; ++i) {
    const double e = (i - half) * 14.0 / n;  // exponents in about [-7, 7]
    const double off = std::exp2(e);
    double p;
    if (!iv.left_finite() && !iv.right_finite()) {
      p = (i % 2 == 0) ? c + off : c - off;
    } else if (iv.left_finite()) {
      p = (i % 2 == 0) ? iv.left + (c - iv.left) * off : c + off;
      if (p <= iv.left) p = iv.left + (c - iv.left) * 1e-6;
    } else {
      p = (i % 2 == 0) ? iv.right - (iv.right - c) * off : c - off;
      if (p >= iv.right) p = iv.right - (iv.right - c) * 1e-6;
    }
    if (iv.contains(p)) pts.push_back(p);
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

DiffusionSpec make_spec(const Interval& interval, const expr::Ast& s, const expr::Ast& b,
                        bool differentiable_s, const std::string& label) {
  if (!(interval.left < interval.right))
    throw ConfigError("interval must satisfy left < right");
  DiffusionSpec spec;
  spec.interval = interval;
  spec.label = label;
  spec.s_ast = s;
  spec.b_ast = b;
  spec.b_deriv_ast = b.derivative();
  spec.s_prog = s.compile();
  spec.b_prog = b.compile();
  spec.b_deriv_prog = spec.b_deriv_ast.compile();
  if (differentiable_s) {
    spec.s_deriv_ast = s.derivative();
    spec.s_deriv_prog = spec.s_deriv_ast->compile();
    spec.f_continuously_differentiable = true;
  }

  const auto pts = probe_points(interval, 50);
  double sign = 0.0;
  bool driftless = true, half_sp = differentiable_s, over_x = interval.left == 0.0 &&
                                                             !interval.right_finite();
  for (double x : pts) {
    const auto sv = spec.s_ast.eval_checked(x);
    if (!sv.ok)
      throw ConfigError("dispersion could not be evaluated at probe x=" +
                        std::to_string(x) + ": " + sv.reason);
    if (sv.value == 0.0)
      throw ConfigError("zero dispersion at probe x=" + std::to_string(x));
    const double this_sign = sv.value > 0.0 ? 1.0 : -1.0;
    if (sign == 0.0) sign = this_sign;
    if (sign != this_sign)
      throw ConfigError("dispersion changes sign inside the interval");

    const auto bv = spec.b_ast.eval_checked(x);
    if (!bv.ok)
      throw ConfigError("drift could not be evaluated at probe x=" +
                        std::to_string(x) + ": " + bv.reason);
    const double scale = 1.0 + std::fabs(sv.value) + std::fabs(bv.value);
    if (std::fabs(bv.value) > 1e-12 * scale) driftless = false;
    if (differentiable_s) {
      const auto spv = spec.s_deriv_ast->eval_checked(x);
      if (half_sp &&
          (!spv.ok || std::fabs(bv.value - 0.5 * spv.value) > 1e-10 * scale))
        half_sp = false;
      // declared derivative must track a finite difference of s
      const double h = 1e-5 * (1.0 + std::fabs(x));
      if (interval.contains(x - h) && interval.contains(x + h)) {
        const auto sp = spec.s_ast.eval_checked(x + h);
        const auto sm = spec.s_ast.eval_checked(x - h);
        if (sp.ok && sm.ok && spv.ok) {
          const double fd = (sp.value - sm.value) / (2.0 * h);
          if (std::fabs(fd - spv.value) > 1e-4 * (1.0 + std::fabs(fd)))
            throw ConfigError("declared derivative of s disagrees with finite "
                              "differences at x=" + std::to_string(x));
        }
      }
    }
    if (over_x && std::fabs(bv.value - sv.value / x) > 1e-10 * scale) over_x = false;
  }
  spec.dispersion_sign = sign;
  spec.driftless = driftless;
  spec.half_s_prime_drift = half_sp && !driftless;
  spec.s_over_x_drift = over_x && !driftless;
  return spec;
}

double ratio_f(const DiffusionSpec& spec, double x) {
  if (!spec.interval.contains(x))
    throw ConfigError("ratio_f: x outside the state interval");
  return spec.f(x);
}

double antiderivative_F(const DiffusionSpec& spec, double c, double x) {
  if (!spec.interval.contains(c) || !spec.interval.contains(x))
    throw ConfigError("antiderivative_F: endpoints must lie in the state interval");
  auto integrand = [&spec](double u) {
    const auto bv = spec.b_ast.eval_checked(u);
    const auto sv = spec.s_ast.eval_checked(u);
    if (!bv.ok || !sv.ok || sv.value == 0.0)
      return std::numeric_limits<double>::quiet_NaN();
    return bv.value / sv.value;
  };
  quad::Options opt;
  opt.abs_tol = 1e-10;
  return quad::integrate_or_throw(integrand, c, x, opt, "antiderivative_F");
}

double potential_V(const DiffusionSpec& spec, double x) {
  if (!spec.has_s_deriv())
    throw ConfigError("potential_V needs the derivative of s; construct the spec "
                      "with differentiable_s");
  const double bv = spec.b(x);
  return 0.5 * (bv * bv + spec.b_prime(x) * spec.s(x) - bv * spec.s_prime(x));
}

namespace {

void push_levels(std::vector<double>& out, double endpoint, double anchor, int n_max,
                 bool left_side) {
  if (std::isfinite(endpoint)) {
    // geometric approach: remaining distance halves each level
    for (int n = 1; n <= n_max; ++n)
      out.push_back(endpoint + (anchor - endpoint) * std::ldexp(1.0, -n));
    return;
  }
  // geometric escape: unit offset from the anchor, then doubling
  double v = left_side ? anchor - 1.0 : anchor + 1.0;
  for (int n = 1; n <= n_max; ++n) {
    out.push_back(v);
    const bool value_doubling_escapes = left_side ? (v < 0.0) : (v > 0.0);
    v = value_doubling_escapes ? 2.0 * v : anchor + 2.0 * (v - anchor);
  }
}

}  // namespace

TruncationLadder default_ladder(const Interval& iv, int n_max) {
  return default_ladder(iv, n_max, default_anchor(iv));
}

TruncationLadder default_ladder(const Interval& iv, int n_max, double anchor) {
  if (n_max < 1) throw ConfigError("ladder depth must be at least 1");
  if (!iv.contains(anchor)) throw ConfigError("ladder anchor outside the interval");
  TruncationLadder ladder;
  ladder.interval = iv;
  ladder.anchor = anchor;
  push_levels(ladder.ell, iv.left, anchor, n_max, /*left_side=*/true);
  push_levels(ladder.r, iv.right, anchor, n_max, /*left_side=*/false);
  for (int n = 0; n < n_max; ++n) {
    if (!(ladder.ell[n] < ladder.r[n]) || !iv.contains(ladder.ell[n]) ||
        !iv.contains(ladder.r[n]))
      throw ConfigError("degenerate truncation ladder");
    if (n > 0 && !(ladder.ell[n] < ladder.ell[n - 1] && ladder.r[n] > ladder.r[n - 1]))
      throw ConfigError("truncation ladder is not strictly nested");
  }
  return ladder;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

const std::vector<CatalogEntry>& catalog_entries() {
  static const std::vector<CatalogEntry> entries = {
      {"reciprocal_bm",
       "reciprocal of a Brownian motion; explodes through the right endpoint",
       "-x^2", "-x", {0.0, kInf}, {}, true},
      {"power_drift",
       "quadratic dispersion with linear inward drift scaled by kappa",
       "-x^2", "-kappa*x", {0.0, kInf},
       {{"kappa", 1.5, 0.5, kInf, false, true}}, true},
      {"htransform_power",
       "power dispersion x^p with drift s/x (Doob transform of the driftless case)",
       "x^p", "x^(p-1)", {0.0, kInf},
       {{"p", 1.5, 0.0, kInf, true, true}}, true},
      {"affine_variance",
       "square-root dispersion, constant upward drift; hits the origin",
       "kappa*sqrt(x)", "kappa/(4*sqrt(x))", {0.0, kInf},
       {{"kappa", 1.0, 0.0, kInf, true, true}}, true},
      {"quartic_tan",
       "quadratic dispersion 1+x^2 on the whole line; exits through both ends",
       "1+x^2", "nu+x", {-kInf, kInf},
       {{"nu", 0.0, -kInf, kInf, true, true}}, true},
      {"cubic_drift",
       "dispersion x^(3/2) with drift nu + (3/4) sqrt(x); explodes to infinity",
       "x^(3/2)", "nu+(3/4)*sqrt(x)", {0.0, kInf},
       {{"nu", 0.0, -kInf, kInf, true, true}}, true},
      {"bessel",
       "Bessel-type diffusion of dimension delta < 2; reaches the origin",
       "1", "(delta-1)/(2*x)", {0.0, kInf},
       {{"delta", 1.0, -kInf, 2.0, true, true}}, true},
      {"exp_drift",
       "unit dispersion with exponential drift exp(beta*x); explodes to infinity",
       "1", "exp(beta*x)", {-kInf, kInf},
       {{"beta", 1.0, 0.0, kInf, true, true}}, false},
  };
  return entries;
}

DiffusionSpec builtin_catalog(const std::string& name, const expr::Bindings& parameters) {
  const CatalogEntry* entry = nullptr;
  for (const auto& e : catalog_entries())
    if (e.name == name) entry = &e;
  if (!entry) throw ConfigError("unknown catalog model '" + name + "'");

  expr::Bindings bound;
  for (const auto& p : entry->params) {
    double v = p.default_value;
    auto it = parameters.find(p.name);
    if (it != parameters.end()) v = it->second;
    const bool below = p.min_open ? !(v > p.min) : !(v >= p.min);
    const bool above = p.max_open ? !(v < p.max) : !(v <= p.max);
    if (below || above)
      throw ConfigError("parameter '" + p.name + "' of model '" + name +
                        "' outside its documented range");
    bound[p.name] = v;
  }
  for (const auto& kv : parameters)
    if (!bound.count(kv.first))
      throw ConfigError("model '" + name + "' has no parameter '" + kv.first + "'");

  std::set<std::string> names;
  for (const auto& p : entry->params) names.insert(p.name);
  const expr::Ast s = expr::Ast::parse(entry->s_source, names).bind(bound);
  const expr::Ast b = expr::Ast::parse(entry->b_source, names).bind(bound);
  DiffusionSpec spec = make_spec(entry->interval, s, b, /*differentiable_s=*/true, name);
  spec.f_locally_square_integrable = true;
  spec.f_continuously_differentiable = true;

  // closed-form antiderivative F and potential V, used as oracles in tests
  if (name == "reciprocal_bm") {
    spec.symbolic_F = [](double x) { return std::log(x); };
    spec.symbolic_V = [](double) { return 0.0; };
  } else if (name == "power_drift") {
    const double kappa = bound.at("kappa");
    spec.symbolic_F = [kappa](double x) { return kappa * std::log(x); };
    spec.symbolic_V = [kappa](double x) { return 0.5 * kappa * (kappa - 1.0) * x * x; };
  } else if (name == "htransform_power") {
    spec.symbolic_F = [](double x) { return std::log(x); };
    spec.symbolic_V = [](double) { return 0.0; };
  } else if (name == "affine_variance") {
    const double kappa = bound.at("kappa");
    spec.symbolic_F = [](double x) { return 0.25 * std::log(x); };
    spec.symbolic_V = [kappa](double x) { return -3.0 * kappa * kappa / (32.0 * x); };
  } else if (name == "quartic_tan") {
    const double nu = bound.at("nu");
    spec.symbolic_F = [nu](double x) {
      return nu * std::atan(x) + 0.5 * std::log1p(x * x);
    };
    spec.symbolic_V = [nu](double) { return 0.5 * (1.0 + nu * nu); };
  } else if (name == "cubic_drift") {
    const double nu = bound.at("nu");
    spec.symbolic_F = [nu](double x) {
      return -2.0 * nu / std::sqrt(x) + 0.75 * std::log(x);
    };
    spec.symbolic_V = [nu](double x) { return 0.5 * nu * nu - 3.0 * x / 32.0; };
  } else if (name == "bessel") {
    const double delta = bound.at("delta");
    spec.symbolic_F = [delta](double x) { return 0.5 * (delta - 1.0) * std::log(x); };
    spec.symbolic_V = [delta](double x) {
      return (delta - 1.0) * (delta - 3.0) / (8.0 * x * x);
    };
  } else if (name == "exp_drift") {
    const double beta = bound.at("beta");
    spec.symbolic_F = [beta](double x) { return std::exp(beta * x) / beta; };
    spec.symbolic_V = [beta](double x) {
      return 0.5 * (std::exp(2.0 * beta * x) + beta * std::exp(beta * x));
    };
  }
  return spec;
}

}  // namespace model
}  // namespace blowup
