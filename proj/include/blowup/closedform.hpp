#pragma once

#include <functional>
#include <optional>
#include <string>

#include "blowup/expr.hpp"
#include "blowup/special.hpp"

namespace blowup::closedform {

// Analytic survival functions P_xi(S > T) for the builtin model families.

// quadratic dispersion -x^2 with drift -x: 2 Phi(1/(xi sqrt(T))) - 1
double reciprocal_bm_survival(double xi, double t);

// drift scaled by kappa > 1/2: regularized gamma tail with index kappa - 1/2
// evaluated at 1/(2 xi^2 T).  kappa = 1/2 degenerates and is refused.
double power_drift_survival(double kappa, double xi, double t);
// direct quadrature of the Bessel-series integral form, for cross-checking
double power_drift_survival_quadrature(double kappa, double xi, double t);

// dispersion x^(3/2) with drift s/x: 1 - exp(-2/(xi T))
double htransform_32_survival(double xi, double t);

// dispersion kappa sqrt(x), drift kappa/(4 sqrt(x)): 2 Phi(2 sqrt(xi)/(kappa sqrt(T))) - 1
double affine_variance_survival(double kappa, double xi, double t);

// dispersion 1 + x^2, drift nu + x: exit-time tail assembled from the
// theta series
double quartic_survival(double nu, double xi, double t,
                        const special::SeriesControl& ctrl = {});

// dispersion x^(3/2), drift nu + (3/4) sqrt(x): one-sided passage of a
// drifted Brownian motion to the level 2/sqrt(xi)
double cubic_survival(double nu, double xi, double t);
// integral of the printed first-passage density over [t1, t2]; equals
// cubic_survival(t1) - cubic_survival(t2)
double cubic_survival_window(double nu, double xi, double t1, double t2);

// Bessel-type dimension delta < 2: regularized gamma tail H(xi^2/(2T))
// with index 1 - delta/2
double bessel_lowdim_survival(double delta, double xi, double t);

struct ClosedForm {
  std::string name;
  std::function<double(double xi, double t)> survival;
};

// Closed form for a catalog model with bound parameters, when one exists.
std::optional<ClosedForm> for_model(const std::string& catalog_name,
                                    const expr::Bindings& params = {});

}  // namespace blowup::closedform
