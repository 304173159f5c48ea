#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace blowup {

// Estimated tail P_xi(S > T) on a grid of horizons, with per-point
// uncertainty and method metadata.
struct SurvivalCurve {
  struct Point {
    double t = 0.0;
    double estimate = 0.0;        // in [0,1]
    double raw = 0.0;             // unclamped value (weighted means may overshoot)
    double stderr_ = 0.0;         // 0 for deterministic methods
    long n_eff = 0;               // effective sample count (0 if n/a)
    double censored_fraction = 0.0;
  };
  std::string method;
  long n_paths = 0;
  std::vector<Point> points;
  std::map<std::string, double> diagnostics;  // solver metadata (levels, increments, ...)

  double at(double t) const;  // exact grid lookup; throws if t is not a grid point
};

namespace curve {

// CSV contract: header comment lines carrying the resolved configuration,
// then "T,estimate,stderr,method,n_paths,censored_fraction" rows with
// 17 significant digits.
void write_csv(std::ostream& out, const SurvivalCurve& curve,
               const std::map<std::string, std::string>& config);

std::string format_number(double v);  // %.17g

// Checks estimates lie in [0,1] and are nonincreasing in T within
// `slack` joint standard errors; returns an empty string or a complaint.
std::string validate(const SurvivalCurve& curve, double slack = 2.0);

}  // namespace curve
}  // namespace blowup
