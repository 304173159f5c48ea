#pragma once

namespace blowup::special {

struct SeriesControl {
  int max_terms = 2000;
  double abs_tol = 1e-14;
  double rel_tol = 1e-13;
};

// log Gamma(x) for x > 0 (Lanczos, g = 7, 9 coefficients).
double log_gamma(double x);
double gamma_fn(double x);

// Modified Bessel function of the first kind, nu >= 0, u >= 0.
// Power series with a large-argument asymptotic switch at u > 30.
double bessel_i(double nu, double u, const SeriesControl& ctrl = {});

// Regularized lower incomplete gamma P(nu, u) in [0,1].
double reg_lower_gamma(double nu, double u);

// Theta(t; u, v) = sum_{k in Z} (v-u+2kv)/sqrt(2 pi t^3)
//                  * exp(-(v-u+2kv)^2/(2t)),  t > 0, v > 0.
double theta_series(double t, double u, double v, const SeriesControl& ctrl = {});

// i_t(z) = z exp(pi^2/(4t)) / (pi sqrt(pi t))
//          * int_0^inf exp(-z cosh(u) - u^2/(4t)) sinh(u) sin(pi u/(2t)) du.
// The quadrature is split at the zeros of the sine factor u = 2kt so
// each adaptive panel is sign-coherent.
double inv_laplace_i(double t, double z, const SeriesControl& ctrl = {});

// Standard normal distribution function, via erfc.
double std_normal_cdf(double x);
double std_normal_pdf(double x);

}  // namespace blowup::special
