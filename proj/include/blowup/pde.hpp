#pragma once

#include <Eigen/Dense>
#include <vector>

#include "blowup/model.hpp"
#include "blowup/survival_curve.hpp"

namespace blowup::pde {

struct SolverOptions {
  int space_nodes = 1201;      // node budget for the innermost level
  int max_space_nodes = 90001; // cap as the levels widen
  int time_nodes = 400;
  bool prefer_lamperti = true; // uniform grid in unit-dispersion coordinates
  double initial_value = 1.0;  // initial data (1 except in comparison tests)
};

// One truncated initial/boundary value problem: initial data 1, absorbing
// (zero Dirichlet) lateral data at the level boundaries.  Crank-Nicolson
// with an implicit start-up and drift upwinding past cell Peclet 2.
struct TruncatedGrid {
  int level = 0;
  bool lamperti = false;
  std::vector<double> x;   // node positions in the original coordinate
  std::vector<double> pos; // node positions in the solve coordinate
  std::vector<double> t;   // time nodes, t[0] = 0
  Eigen::MatrixXd u;       // (time) x (space), values in [0,1]
  double max_peclet = 0.0;

  double value(double T, double xi) const;  // bilinear interpolation
};

TruncatedGrid solve_truncated_cauchy(const DiffusionSpec& spec,
                                     const TruncationLadder& ladder, int level,
                                     double t_max, const SolverOptions& opt = {});

// Truncated solutions increase with the level; iterate until the values at
// (t_grid, xi) move by less than conv_tol, and report the limit curve.
SurvivalCurve minimal_survival(const DiffusionSpec& spec, double xi,
                               const std::vector<double>& t_grid,
                               const TruncationLadder& ladder, double conv_tol,
                               const SolverOptions& opt = {});

// Resolvent on a truncated level: (s^2/2) u'' + b s u' - lambda u + 1 = 0
// with zero boundary data; a single tridiagonal solve.
struct ResolventSolution {
  double lambda = 0.0;
  int level = 0;
  std::vector<double> x;
  std::vector<double> values;  // in [0, 1/lambda]

  double at(double xi) const;  // linear interpolation
};

ResolventSolution solve_resolvent(const DiffusionSpec& spec,
                                  const TruncationLadder& ladder, int level,
                                  double lambda, const SolverOptions& opt = {});

// Deep-level driver: increases the level until the value at xi stabilizes.
double resolvent_limit(const DiffusionSpec& spec, const TruncationLadder& ladder,
                       double lambda, double xi, double conv_tol,
                       const SolverOptions& opt = {});

// | int_0^inf e^{-lambda T} U(T) dT  -  u_hat |, the transform identity
// residual.  The curve must reach far enough that the analytic tail bound
// e^{-lambda T_max} U(T_max) / lambda is below tail_budget.
double laplace_consistency(const SurvivalCurve& curve, double u_hat, double lambda,
                           double tail_budget = 1e-3);

}  // namespace blowup::pde
