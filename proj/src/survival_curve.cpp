#include "blowup/survival_curve.hpp"

#include <cmath>
#include <cstdio>

#include "blowup/errors.hpp"

namespace blowup {

double SurvivalCurve::at(double t) const {
  for (const auto& p : points)
    if (p.t == t) return p.estimate;
  throw ConfigError("survival curve has no grid point at T=" + std::to_string(t));
}

namespace curve {

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(std::ostream& out, const SurvivalCurve& curve,
               const std::map<std::string, std::string>& config) {
  out << "# blowup survival curve\n";
  out << "# config:";
  for (const auto& kv : config) out << " " << kv.first << "=" << kv.second;
  out << "\n";
  for (const auto& kv : curve.diagnostics)
    out << "# " << kv.first << "=" << format_number(kv.second) << "\n";
  out << "T,estimate,stderr,method,n_paths,censored_fraction\n";
  for (const auto& p : curve.points) {
    out << format_number(p.t) << "," << format_number(p.estimate) << ","
        << format_number(p.stderr_) << "," << curve.method << "," << curve.n_paths
        << "," << format_number(p.censored_fraction) << "\n";
  }
}

std::string validate(const SurvivalCurve& c, double slack) {
  for (size_t i = 0; i < c.points.size(); ++i) {
    const auto& p = c.points[i];
    if (!(p.estimate >= 0.0 && p.estimate <= 1.0))
      return "estimate out of [0,1] at T=" + std::to_string(p.t);
    if (i > 0) {
      const auto& q = c.points[i - 1];
      if (!(p.t > q.t)) return "grid not strictly increasing";
      const double joint = std::sqrt(p.stderr_ * p.stderr_ + q.stderr_ * q.stderr_);
      if (p.estimate > q.estimate + slack * joint + 1e-12)
        return "estimates increase in T at T=" + std::to_string(p.t);
    }
  }
  return "";
}

}  // namespace curve
}  // namespace blowup
