#include "blowup/pde.hpp"

#include <algorithm>
#include <cmath>

#include "blowup/errors.hpp"
#include "blowup/transform.hpp"

namespace blowup::pde {

namespace {

// in-place Thomas solve of a tridiagonal system; diag/rhs are overwritten
void solve_tridiagonal(Eigen::VectorXd& lower, Eigen::VectorXd& diag,
                       Eigen::VectorXd& upper, Eigen::VectorXd& rhs,
                       Eigen::VectorXd& out) {
  const int n = static_cast<int>(diag.size());
  for (int i = 1; i < n; ++i) {
    if (diag[i - 1] == 0.0) throw NumericError("singular tridiagonal system");
    const double w = lower[i] / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  if (diag[n - 1] == 0.0) throw NumericError("singular tridiagonal system");
  out[n - 1] = rhs[n - 1] / diag[n - 1];
  for (int i = n - 2; i >= 0; --i) out[i] = (rhs[i] - upper[i] * out[i + 1]) / diag[i];
}

struct Discretization {
  bool lamperti = false;
  std::vector<double> x;    // original coordinate at the nodes
  std::vector<double> pos;  // solve coordinate (equals x when raw)
  Eigen::VectorXd diffusion;  // a(pos) in u_t = a u'' + c u'
  Eigen::VectorXd drift;      // c(pos)
  double h = 0.0;
  double max_peclet = 0.0;
};

int node_budget(double width, double reference_width, const SolverOptions& opt) {
  const double scale = width / std::max(reference_width, 1e-300);
  const double target = (opt.space_nodes - 1) * std::max(1.0, scale);
  const int nodes = static_cast<int>(std::min<double>(target, opt.max_space_nodes - 1));
  return std::max(nodes + 1, 41);
}

Discretization discretize(const DiffusionSpec& spec, const TruncationLadder& ladder,
                          int level, const SolverOptions& opt) {
  Discretization d;
  const double xl = ladder.lower(level);
  const double xr = ladder.upper(level);
  d.lamperti = opt.prefer_lamperti && spec.has_s_deriv();

  if (d.lamperti) {
    transform::LampertiFrame frame(spec, ladder.anchor, xl, xr);
    const double yl = frame.map(xl), yr = frame.map(xr);
    const double ref_width = frame.map(ladder.upper(1)) - frame.map(ladder.lower(1));
    const int m = node_budget(yr - yl, ref_width, opt);
    d.pos.resize(m);
    d.x.resize(m);
    d.h = (yr - yl) / (m - 1);
    d.diffusion = Eigen::VectorXd::Constant(m, 0.5);
    d.drift.resize(m);
    for (int j = 0; j < m; ++j) {
      const double y = yl + j * d.h;
      d.pos[j] = y;
      d.x[j] = frame.inverse(std::clamp(y, yl, yr));
      d.drift[j] = frame.unit_drift(d.pos[j]);
    }
  } else {
    const int m = node_budget(xr - xl, ladder.upper(1) - ladder.lower(1), opt);
    d.pos.resize(m);
    d.x.resize(m);
    d.h = (xr - xl) / (m - 1);
    d.diffusion.resize(m);
    d.drift.resize(m);
    for (int j = 0; j < m; ++j) {
      const double x = xl + j * d.h;
      d.pos[j] = x;
      d.x[j] = x;
      const double s = spec.s(x);
      d.diffusion[j] = 0.5 * s * s;
      d.drift[j] = spec.b(x) * s;
    }
  }
  for (int j = 1; j + 1 < static_cast<int>(d.pos.size()); ++j)
    d.max_peclet = std::max(d.max_peclet,
                            std::fabs(d.drift[j]) * d.h / std::max(d.diffusion[j], 1e-300));
  return d;
}

// rows of the spatial operator L u = a u'' + c u', upwinded past Peclet 2
struct OperatorRows {
  Eigen::VectorXd lo, di, up;
};

OperatorRows build_operator(const Discretization& d) {
  const int m = static_cast<int>(d.pos.size());
  OperatorRows rows;
  rows.lo.setZero(m);
  rows.di.setZero(m);
  rows.up.setZero(m);
  const double h = d.h, h2 = h * h;
  for (int j = 1; j + 1 < m; ++j) {
    const double a = d.diffusion[j];
    const double c = d.drift[j];
    double lo = a / h2, up = a / h2, di = -2.0 * a / h2;
    const double peclet = std::fabs(c) * h / std::max(a, 1e-300);
    if (peclet > 2.0) {
      if (c > 0.0) {
        up += c / h;
        di -= c / h;
      } else {
        lo += -c / h;
        di -= -c / h;
      }
    } else {
      up += c / (2.0 * h);
      lo -= c / (2.0 * h);
    }
    rows.lo[j] = lo;
    rows.di[j] = di;
    rows.up[j] = up;
  }
  return rows;
}

}  // namespace

double TruncatedGrid::value(double T, double xi) const {
  // locate xi among the original-coordinate nodes
  auto xit = std::upper_bound(x.begin(), x.end(), xi);
  if (xit == x.begin() || xit == x.end()) {
    if (xi == x.front()) return u(0, 0);
    if (xi == x.back()) return u(0, static_cast<int>(x.size()) - 1);
    throw ConfigError("query point outside the truncated grid");
  }
  const int j = static_cast<int>(xit - x.begin());
  const double wx = (xi - x[j - 1]) / (x[j] - x[j - 1]);

  auto tit = std::upper_bound(t.begin(), t.end(), T);
  if (tit == t.begin())
    return (1.0 - wx) * u(0, j - 1) + wx * u(0, j);
  if (tit == t.end()) {
    if (T > t.back() + 1e-12) throw ConfigError("query time beyond the solved horizon");
    const int k = static_cast<int>(t.size()) - 1;
    return (1.0 - wx) * u(k, j - 1) + wx * u(k, j);
  }
  const int k = static_cast<int>(tit - t.begin());
  const double wt = (T - t[k - 1]) / (t[k] - t[k - 1]);
  const double lowr = (1.0 - wx) * u(k - 1, j - 1) + wx * u(k - 1, j);
  const double uppr = (1.0 - wx) * u(k, j - 1) + wx * u(k, j);
  return (1.0 - wt) * lowr + wt * uppr;
}

TruncatedGrid solve_truncated_cauchy(const DiffusionSpec& spec,
                                     const TruncationLadder& ladder, int level,
                                     double t_max, const SolverOptions& opt) {
  if (level < 1 || level > ladder.depth())
    throw ConfigError("truncation level outside the ladder");
  if (!(t_max > 0.0)) throw ConfigError("horizon must be positive");

  Discretization d = discretize(spec, ladder, level, opt);
  OperatorRows L = build_operator(d);
  const int m = static_cast<int>(d.pos.size());
  const int K = std::max(opt.time_nodes, 8);
  const double dt = t_max / K;

  TruncatedGrid grid;
  grid.level = level;
  grid.lamperti = d.lamperti;
  grid.x = d.x;
  grid.pos = d.pos;
  grid.max_peclet = d.max_peclet;
  grid.t.resize(K + 1);
  for (int k = 0; k <= K; ++k) grid.t[k] = k * dt;
  grid.u.setZero(K + 1, m);

  Eigen::VectorXd u = Eigen::VectorXd::Constant(m, opt.initial_value);
  grid.u.row(0) = u;

  Eigen::VectorXd lo(m), di(m), up(m), rhs(m), next(m);
  auto assemble = [&](double implicit_weight, double dtau) {
    for (int j = 0; j < m; ++j) {
      lo[j] = -implicit_weight * dtau * L.lo[j];
      di[j] = 1.0 - implicit_weight * dtau * L.di[j];
      up[j] = -implicit_weight * dtau * L.up[j];
    }
    // absorbing boundaries
    di[0] = 1.0; up[0] = 0.0;
    di[m - 1] = 1.0; lo[m - 1] = 0.0;
  };
  auto explicit_part = [&](const Eigen::VectorXd& v, double explicit_weight,
                           double dtau) {
    rhs[0] = 0.0;
    rhs[m - 1] = 0.0;
    for (int j = 1; j + 1 < m; ++j)
      rhs[j] = v[j] + explicit_weight * dtau *
                          (L.lo[j] * v[j - 1] + L.di[j] * v[j] + L.up[j] * v[j + 1]);
    return;
  };

  for (int k = 1; k <= K; ++k) {
    if (k == 1) {
      // start-up: two implicit half steps damp the corner discontinuity
      for (int half = 0; half < 2; ++half) {
        assemble(1.0, 0.5 * dt);
        explicit_part(u, 0.0, 0.5 * dt);
        u[0] = 0.0;
        u[m - 1] = 0.0;
        rhs[0] = 0.0;
        rhs[m - 1] = 0.0;
        solve_tridiagonal(lo, di, up, rhs, next);
        u = next;
      }
    } else {
      assemble(0.5, dt);
      explicit_part(u, 0.5, dt);
      solve_tridiagonal(lo, di, up, rhs, next);
      u = next;
    }
    const double lo_v = u.minCoeff(), hi_v = u.maxCoeff();
    if (lo_v < -1e-8 || hi_v > opt.initial_value + 1e-8) {
      throw NumericError("truncated solve left [0,1]: min=" + std::to_string(lo_v) +
                         " max=" + std::to_string(hi_v) +
                         " max_peclet=" + std::to_string(d.max_peclet) +
                         " dt/h^2=" + std::to_string(dt / (d.h * d.h)));
    }
    for (int j = 0; j < m; ++j)
      u[j] = std::min(std::max(u[j], 0.0), opt.initial_value);
    grid.u.row(k) = u;
  }
  return grid;
}

SurvivalCurve minimal_survival(const DiffusionSpec& spec, double xi,
                               const std::vector<double>& t_grid,
                               const TruncationLadder& ladder, double conv_tol,
                               const SolverOptions& opt) {
  if (t_grid.empty()) throw ConfigError("minimal_survival needs a T grid");
  if (!(ladder.lower(1) < xi && xi < ladder.upper(1)))
    throw ConfigError("xi must lie inside the first truncation level");
  const double t_max = t_grid.back();

  SurvivalCurve curve;
  curve.method = "pde";
  std::vector<double> prev, cur;
  double final_increment = std::numeric_limits<double>::quiet_NaN();
  int level_used = 0;
  for (int level = 1; level <= ladder.depth(); ++level) {
    TruncatedGrid grid = solve_truncated_cauchy(spec, ladder, level, t_max, opt);
    cur.clear();
    for (double T : t_grid) cur.push_back(grid.value(T, xi));
    level_used = level;
    if (!prev.empty()) {
      double inc = 0.0;
      for (size_t i = 0; i < cur.size(); ++i) {
        const double diff = cur[i] - prev[i];
        if (diff < -std::max(1e-6, 0.05 * conv_tol))
          throw NumericError("truncated solutions decreased between levels (" +
                             std::to_string(diff) + " at T=" +
                             std::to_string(t_grid[i]) + ")");
        inc = std::max(inc, std::fabs(diff));
      }
      final_increment = inc;
      if (inc < conv_tol) break;
    }
    prev = cur;
  }

  for (size_t i = 0; i < t_grid.size(); ++i) {
    SurvivalCurve::Point pt;
    pt.t = t_grid[i];
    pt.estimate = std::min(1.0, std::max(0.0, cur[i]));
    pt.raw = cur[i];
    curve.points.push_back(pt);
  }
  curve.diagnostics["levels_used"] = level_used;
  curve.diagnostics["final_increment"] = final_increment;
  return curve;
}

double ResolventSolution::at(double xi) const {
  auto it = std::upper_bound(x.begin(), x.end(), xi);
  if (it == x.begin() || it == x.end()) {
    if (xi == x.front()) return values.front();
    if (xi == x.back()) return values.back();
    throw ConfigError("query point outside the resolvent grid");
  }
  const int j = static_cast<int>(it - x.begin());
  const double w = (xi - x[j - 1]) / (x[j] - x[j - 1]);
  return (1.0 - w) * values[j - 1] + w * values[j];
}

ResolventSolution solve_resolvent(const DiffusionSpec& spec,
                                  const TruncationLadder& ladder, int level,
                                  double lambda, const SolverOptions& opt) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (level < 1 || level > ladder.depth())
    throw ConfigError("truncation level outside the ladder");
  Discretization d = discretize(spec, ladder, level, opt);
  OperatorRows L = build_operator(d);
  const int m = static_cast<int>(d.pos.size());

  // (L - lambda) u = -1 with zero boundary values
  Eigen::VectorXd lo(m), di(m), up(m), rhs(m), sol(m);
  for (int j = 0; j < m; ++j) {
    lo[j] = L.lo[j];
    di[j] = L.di[j] - lambda;
    up[j] = L.up[j];
    rhs[j] = -1.0;
  }
  di[0] = 1.0; up[0] = 0.0; rhs[0] = 0.0;
  di[m - 1] = 1.0; lo[m - 1] = 0.0; rhs[m - 1] = 0.0;
  solve_tridiagonal(lo, di, up, rhs, sol);

  ResolventSolution out;
  out.lambda = lambda;
  out.level = level;
  out.x = d.x;
  out.values.resize(m);
  const double bound = 1.0 / lambda + 1e-8;
  for (int j = 0; j < m; ++j) {
    if (sol[j] < -1e-8 || sol[j] > bound)
      throw NumericError("resolvent solve left [0, 1/lambda]");
    out.values[j] = std::min(std::max(sol[j], 0.0), 1.0 / lambda);
  }
  return out;
}

double resolvent_limit(const DiffusionSpec& spec, const TruncationLadder& ladder,
                       double lambda, double xi, double conv_tol,
                       const SolverOptions& opt) {
  double prev = std::numeric_limits<double>::quiet_NaN();
  double cur = 0.0;
  for (int level = 1; level <= ladder.depth(); ++level) {
    cur = solve_resolvent(spec, ladder, level, lambda, opt).at(xi);
    if (!std::isnan(prev) && std::fabs(cur - prev) < conv_tol) return cur;
    prev = cur;
  }
  return cur;
}

double laplace_consistency(const SurvivalCurve& curve, double u_hat, double lambda,
                           double tail_budget) {
  if (curve.points.size() < 2) throw ConfigError("curve too short for the transform");
  const double t_max = curve.points.back().t;
  const double u_last = curve.points.back().estimate;
  const double tail_bound = std::exp(-lambda * t_max) * u_last / lambda;
  if (tail_bound > tail_budget)
    throw ConfigError("insufficient T_max coverage for the transform identity");

  // trapezoid of e^{-lambda T} U(T); U(0) = 1 closes the first panel
  double integral = 0.0;
  double prev_t = 0.0, prev_v = 1.0;
  for (const auto& p : curve.points) {
    const double v = std::exp(-lambda * p.t) * p.estimate;
    integral += 0.5 * (prev_v + v) * (p.t - prev_t);
    prev_t = p.t;
    prev_v = v;
  }
  integral += 0.5 * tail_bound;  // the tail lies in [0, tail_bound]
  return std::fabs(integral - u_hat);
}

}  // namespace blowup::pde
