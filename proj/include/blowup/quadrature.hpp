#pragma once

#include <functional>
#include <limits>
#include <map>
#include <vector>

namespace blowup::quad {

using Fn = std::function<double(double)>;

struct Result {
  double value = 0.0;
  double error = std::numeric_limits<double>::infinity();
  bool converged = false;
  bool domain_error = false;  // the integrand returned NaN somewhere
  long evaluations = 0;
};

struct Options {
  double abs_tol = 1e-10;
  double rel_tol = 1e-12;
  int max_depth = 60;
  long max_panels = 100000;
};

// Adaptive Gauss-Kronrod 7-15 over a finite interval.  a > b is allowed
// and integrates with the usual sign convention.
Result integrate(const Fn& f, double a, double b, const Options& opt = {});

// Same, but throws NumericError / EvalDomainError instead of reporting.
double integrate_or_throw(const Fn& f, double a, double b, const Options& opt = {},
                          const char* what = "integral");

// Cached antiderivative I(x) = int_origin^x f.  Queries integrate from
// the nearest previously computed point, so sweeps of nearby arguments
// cost little.  Not safe for concurrent mutation; use one instance per
// thread of evaluation.
class Cumulative {
 public:
  Cumulative(Fn f, double origin, double segment_tol = 1e-12);
  double operator()(double x) const;
  double origin() const { return origin_; }

 private:
  Fn f_;
  double origin_;
  double tol_;
  mutable std::map<double, double> cache_;
};

// Antiderivative I(x) = int_origin^x f tabulated on an adaptively refined
// knot set; knot values come from Gauss-Kronrod sweeps, queries between
// knots use cubic Hermite interpolation (the integrand is the exact
// derivative).  ensure() must cover the query range up front; afterwards
// lookups are O(log n) and safe to call concurrently.
class TabulatedAntiderivative {
 public:
  TabulatedAntiderivative(Fn f, double origin, double interp_tol = 1e-10);

  void ensure(double lo, double hi);
  double value(double x) const;

  // Inverse lookup; only valid when the integrand is strictly positive
  // (the antiderivative is then strictly increasing).
  double inverse(double target) const;

  double covered_lo() const { return knots_.begin()->first; }
  double covered_hi() const { return knots_.rbegin()->first; }

 private:
  struct Knot {
    double F;   // antiderivative value
    double fx;  // integrand value
  };
  void insert_segment(double a, double b, int depth);
  void refresh();
  double hermite(double x, double x0, const Knot& k0, double x1, const Knot& k1) const;

  Fn f_;
  double origin_;
  double tol_;
  std::map<double, Knot> knots_;
  std::vector<double> xs_;   // flat snapshots for O(log n) lookup
  std::vector<Knot> ks_;
};

// Verdict of a one-sided improper-integral probe.
enum class TailVerdict { divergent, finite, undetermined };

struct TailProbe {
  TailVerdict verdict = TailVerdict::undetermined;
  double partial = 0.0;           // last partial integral
  std::vector<double> partials;   // partial values along the mesh
};

struct TailOptions {
  int levels = 60;            // geometric mesh depth
  double threshold = 1e8;     // partial sum beyond this counts as divergent
  double rel_tol = 1e-6;      // projected tail below this counts as finite
};

// Probes int_{interior}^{endpoint} f along a geometric mesh whose points
// accumulate at `endpoint` (which may be +-inf: the mesh then doubles
// away from `interior` instead).  Distinguishes power/log divergence from
// convergence by the growth pattern of the partial sums.
TailProbe probe_improper(const Fn& f, double interior, double endpoint,
                         const TailOptions& opt = {});

}  // namespace blowup::quad
