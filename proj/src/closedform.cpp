#include "blowup/closedform.hpp"

#include <cmath>

#include "blowup/errors.hpp"
#include "blowup/quadrature.hpp"

namespace blowup::closedform {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0))
    throw ConfigError(std::string(name) + " must be positive");
}

// log Phi(x), stable far in the left tail
double log_normal_cdf(double x) {
  if (x > -10.0) return std::log(special::std_normal_cdf(x));
  const double x2 = x * x;
  return -0.5 * x2 - std::log(-x * std::sqrt(2.0 * M_PI)) +
         std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

}  // namespace

double reciprocal_bm_survival(double xi, double t) {
  require_positive(xi, "xi");
  require_positive(t, "T");
  return 2.0 * special::std_normal_cdf(1.0 / (xi * std::sqrt(t))) - 1.0;
}

double power_drift_survival(double kappa, double xi, double t) {
  require_positive(xi, "xi");
  require_positive(t, "T");
  if (!(kappa > 0.5))
    throw ConfigError("power_drift survival needs kappa > 1/2 (the gamma index "
                      "degenerates at kappa = 1/2)");
  const double nu = kappa - 0.5;
  return special::reg_lower_gamma(nu, 1.0 / (2.0 * xi * xi * t));
}

double power_drift_survival_quadrature(double kappa, double xi, double t) {
  require_positive(xi, "xi");
  require_positive(t, "T");
  if (!(kappa > 0.5)) throw ConfigError("quadrature route also needs kappa > 1/2");
  const double nu = kappa - 0.5;
  // (1/T) xi^-nu exp(-1/(2 T xi^2)) int_0^inf x^{1-nu} e^{-x^2/(2T)} I_nu(x/(xi T)) dx
  const double log_prefactor =
      -std::log(t) - nu * std::log(xi) - 1.0 / (2.0 * t * xi * xi);
  auto integrand = [&](double x) {
    if (x <= 0.0) return 0.0;
    const double z = x / (xi * t);
    // envelope check keeps the far tail out of the adaptive pass
    const double envelope = -x * x / (2.0 * t) + z;
    if (envelope < -60.0) return 0.0;
    return std::pow(x, 1.0 - nu) * std::exp(-x * x / (2.0 * t)) *
           special::bessel_i(nu, z);
  };
  // the integrand dies once x^2/(2T) - x/(xi T) exceeds ~60
  const double upper = 1.0 / xi + std::sqrt(1.0 / (xi * xi) + 120.0 * t) + 1.0;
  quad::Options opt;
  opt.abs_tol = 1e-12;
  opt.rel_tol = 1e-10;
  const double integral = quad::integrate_or_throw(integrand, 0.0, upper, opt,
                                                   "power_drift quadrature");
  return std::exp(log_prefactor) * integral;
}

double htransform_32_survival(double xi, double t) {
  require_positive(xi, "xi");
  require_positive(t, "T");
  return -std::expm1(-2.0 / (xi * t));
}

double affine_variance_survival(double kappa, double xi, double t) {
  require_positive(kappa, "kappa");
  require_positive(xi, "xi");
  require_positive(t, "T");
  return 2.0 * special::std_normal_cdf(2.0 * std::sqrt(xi) / (kappa * std::sqrt(t))) -
         1.0;
}

double quartic_survival(double nu, double xi, double t,
                        const special::SeriesControl& ctrl) {
  require_positive(t, "T");
  const double a = -M_PI_2 - std::atan(xi);
  const double b = M_PI_2 - std::atan(xi);
  const double v = b - a;  // always pi
  auto density = [&](double u) {
    const double damp = std::exp(-0.5 * nu * nu * u);
    if (damp == 0.0) return 0.0;
    return damp * (std::exp(nu * a) * special::theta_series(u, b, v, ctrl) +
                   std::exp(nu * b) * special::theta_series(u, -a, v, ctrl));
  };
  // integrate in chunks until the spectral envelope of the remainder is
  // negligible; the decay rate is (nu^2 + pi^2/v^2)/2 = (nu^2 + 1)/2
  const double rate = 0.5 * (nu * nu + 1.0);
  const double coupling = std::exp(nu * a) + std::exp(nu * b);
  quad::Options opt;
  opt.abs_tol = 1e-10;
  opt.rel_tol = 1e-9;
  double total = 0.0;
  double lo = t;
  const double chunk = std::max(1.0, 2.0 / rate);
  for (int k = 0; k < 10000; ++k) {
    const double hi = lo + chunk;
    total += quad::integrate_or_throw(density, lo, hi, opt, "quartic survival");
    lo = hi;
    // remaining tail, bounded through the spectral form of the series
    const double tail_bound = coupling * (M_PI / (v * v)) *
                              std::exp(-rate * lo) / rate * 2.0;
    if (tail_bound < 1e-9) break;
  }
  return std::min(1.0, std::max(0.0, total));
}

double cubic_survival(double nu, double xi, double t) {
  require_positive(xi, "xi");
  require_positive(t, "T");
  const double m = 2.0 / std::sqrt(xi);  // passage level of W + nu t
  const double sqt = std::sqrt(t);
  const double first = special::std_normal_cdf((nu * t - m) / sqt);
  // exp(2 nu m) Phi(-(m + nu t)/sqrt(t)) needs the log form when nu m is large
  const double second = std::exp(2.0 * nu * m + log_normal_cdf(-(m + nu * t) / sqt));
  return std::min(1.0, std::max(0.0, 1.0 - first - second));
}

double cubic_survival_window(double nu, double xi, double t1, double t2) {
  require_positive(xi, "xi");
  require_positive(t1, "T1");
  if (!(t2 > t1)) throw ConfigError("window needs T2 > T1");
  auto density = [&](double u) {
    const double m = 2.0 / std::sqrt(xi);
    const double arg = m - nu * u;
    return std::sqrt(2.0 / (M_PI * xi * u * u * u)) *
           std::exp(-arg * arg / (2.0 * u));
  };
  quad::Options opt;
  opt.abs_tol = 1e-12;
  opt.rel_tol = 1e-10;
  return quad::integrate_or_throw(density, t1, t2, opt, "cubic survival window");
}

double bessel_lowdim_survival(double delta, double xi, double t) {
  require_positive(xi, "xi");
  require_positive(t, "T");
  if (!(delta < 2.0)) throw ConfigError("bessel survival needs delta < 2");
  return special::reg_lower_gamma(1.0 - 0.5 * delta, xi * xi / (2.0 * t));
}

std::optional<ClosedForm> for_model(const std::string& catalog_name,
                                    const expr::Bindings& params) {
  auto param = [&params](const char* name, double fallback) {
    auto it = params.find(name);
    return it == params.end() ? fallback : it->second;
  };
  if (catalog_name == "reciprocal_bm")
    return ClosedForm{"closed", [](double xi, double t) {
                        return reciprocal_bm_survival(xi, t);
                      }};
  if (catalog_name == "power_drift") {
    const double kappa = param("kappa", 1.5);
    if (!(kappa > 0.5)) return std::nullopt;
    return ClosedForm{"closed", [kappa](double xi, double t) {
                        return power_drift_survival(kappa, xi, t);
                      }};
  }
  if (catalog_name == "htransform_power") {
    const double p = param("p", 1.5);
    if (std::fabs(p - 1.5) < 1e-12)
      return ClosedForm{"closed", [](double xi, double t) {
                          return htransform_32_survival(xi, t);
                        }};
    if (std::fabs(p - 2.0) < 1e-12)
      return ClosedForm{"closed", [](double xi, double t) {
                          return reciprocal_bm_survival(xi, t);
                        }};
    return std::nullopt;
  }
  if (catalog_name == "affine_variance") {
    const double kappa = param("kappa", 1.0);
    return ClosedForm{"closed", [kappa](double xi, double t) {
                        return affine_variance_survival(kappa, xi, t);
                      }};
  }
  if (catalog_name == "quartic_tan") {
    const double nu = param("nu", 0.0);
    return ClosedForm{"closed", [nu](double xi, double t) {
                        return quartic_survival(nu, xi, t);
                      }};
  }
  if (catalog_name == "cubic_drift") {
    const double nu = param("nu", 0.0);
    return ClosedForm{"closed", [nu](double xi, double t) {
                        return cubic_survival(nu, xi, t);
                      }};
  }
  if (catalog_name == "bessel") {
    const double delta = param("delta", 1.0);
    return ClosedForm{"closed", [delta](double xi, double t) {
                        return bessel_lowdim_survival(delta, xi, t);
                      }};
  }
  return std::nullopt;  // exp_drift has no desk-scale closed form here
}

}  // namespace blowup::closedform
