#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "blowup/expr.hpp"

namespace blowup {

// Open state interval; endpoints may be infinite.
struct Interval {
  double left = -std::numeric_limits<double>::infinity();
  double right = std::numeric_limits<double>::infinity();

  bool contains(double x) const { return x > left && x < right; }
  bool left_finite() const { return std::isfinite(left); }
  bool right_finite() const { return std::isfinite(right); }
};

// Nested truncations (ell_n, r_n) decreasing/increasing to the interval
// endpoints; exit times from these levels increase to the explosion time.
struct TruncationLadder {
  Interval interval;
  double anchor = 0.0;
  std::vector<double> ell;  // strictly decreasing toward interval.left
  std::vector<double> r;    // strictly increasing toward interval.right

  int depth() const { return static_cast<int>(ell.size()); }
  double lower(int level) const { return ell.at(level - 1); }  // 1-based
  double upper(int level) const { return r.at(level - 1); }
};

// A diffusion dX = s(X)(dW + b(X) dt) on its open interval, with the
// derived functions the estimators need.  Immutable after construction.
struct DiffusionSpec {
  Interval interval;
  std::string label;

  expr::Ast s_ast, b_ast;                  // parameters already bound
  std::optional<expr::Ast> s_deriv_ast;    // present when s declared C^1
  expr::Ast b_deriv_ast;

  expr::Program s_prog, b_prog, b_deriv_prog;
  std::optional<expr::Program> s_deriv_prog;

  // declared regularity of f = b/s; controls which estimator routes are
  // legal for this spec
  bool f_locally_square_integrable = true;
  bool f_continuously_differentiable = false;

  // structural forms detected at construction (used by the shortcut
  // explosion tests)
  bool driftless = false;          // b == 0
  bool half_s_prime_drift = false; // b == s'/2
  bool s_over_x_drift = false;     // b == s/x on (0,inf)

  double dispersion_sign = 1.0;    // sign of s on the interval

  // optional closed-form references carried by the catalog for tests
  std::function<double(double)> symbolic_F;  // antiderivative of f, any constant
  std::function<double(double)> symbolic_V;

  // throwing accessors
  double s(double x) const { return s_ast.eval(x); }
  double b(double x) const { return b_ast.eval(x); }
  double s_prime(double x) const;
  double b_prime(double x) const { return b_deriv_ast.eval(x); }
  double f(double x) const;        // b/s
  double f_prime(double x) const;  // (b's - b s')/s^2

  bool has_s_deriv() const { return s_deriv_ast.has_value(); }
};

namespace model {

double default_anchor(const Interval& iv);

// Probe grid spread across the interval (log-spaced toward infinite or
// singular endpoints); used for construction-time checks.
std::vector<double> probe_points(const Interval& iv, int n);

DiffusionSpec make_spec(const Interval& interval, const expr::Ast& s, const expr::Ast& b,
                        bool differentiable_s, const std::string& label = "custom");

// b(x)/s(x)
double ratio_f(const DiffusionSpec& spec, double x);

// F(x) = int_c^x f(u) du by adaptive quadrature, |error| <= 1e-10
double antiderivative_F(const DiffusionSpec& spec, double c, double x);

// V(x) = (b^2 + b's - b s')/2 = s^2 (f^2 + f')/2
double potential_V(const DiffusionSpec& spec, double x);

// Finite endpoints are approached geometrically (distance halves each
// level); infinite endpoints escape geometrically from a unit offset of
// the anchor.
TruncationLadder default_ladder(const Interval& iv, int n_max);
TruncationLadder default_ladder(const Interval& iv, int n_max, double anchor);

struct CatalogEntry {
  std::string name;
  std::string description;
  std::string s_source, b_source;
  Interval interval;
  struct Param {
    std::string name;
    double default_value;
    double min, max;      // documented range (closed on finite ends)
    bool min_open, max_open;
  };
  std::vector<Param> params;
  bool has_closed_form;
};

const std::vector<CatalogEntry>& catalog_entries();

// Builtin model families; throws ConfigError for unknown names or
// parameters outside the documented range.
DiffusionSpec builtin_catalog(const std::string& name,
                              const expr::Bindings& parameters = {});

}  // namespace model
}  // namespace blowup
