#include "blowup/special.hpp"

#include <cmath>
#include <string>

#include "blowup/errors.hpp"
#include "blowup/quadrature.hpp"

namespace blowup::special {

namespace {

// Lanczos g = 7, n = 9 (Godfrey coefficients).
constexpr double kLanczos[9] = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2 pi)/2

}  // namespace

double log_gamma(double x) {
  if (!(x > 0.0)) throw EvalDomainError("log_gamma requires x > 0");
  if (x < 0.5) {
    // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
    return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
  }
  const double z = x - 1.0;
  double sum = kLanczos[0];
  for (int i = 1; i < 9; ++i) sum += kLanczos[i] / (z + i);
  const double t = z + 7.5;
  return kHalfLog2Pi + (z + 0.5) * std::log(t) - t + std::log(sum);
}

double gamma_fn(double x) { return std::exp(log_gamma(x)); }

double bessel_i(double nu, double u, const SeriesControl& ctrl) {
  if (nu < 0.0 || u < 0.0) throw EvalDomainError("bessel_i requires nu >= 0, u >= 0");
  if (u == 0.0) return nu == 0.0 ? 1.0 : 0.0;

  if (u > 30.0) {
    // large-argument expansion:
    // I_nu(u) ~ e^u / sqrt(2 pi u) * sum_k (-1)^k a_k(nu) / u^k,
    // a_k = prod_{j=1..k} (4 nu^2 - (2j-1)^2) / (8 j)
    const double mu = 4.0 * nu * nu;
    double term = 1.0, sum = 1.0, prev = std::fabs(term);
    for (int k = 1; k < 40; ++k) {
      const double num = mu - (2.0 * k - 1.0) * (2.0 * k - 1.0);
      term *= -num / (8.0 * k * u);
      if (std::fabs(term) > prev) break;  // asymptotic series started diverging
      sum += term;
      prev = std::fabs(term);
      if (std::fabs(term) < ctrl.abs_tol * std::fabs(sum)) break;
    }
    return std::exp(u) / std::sqrt(2.0 * M_PI * u) * sum;
  }

  // power series, terms formed in log space to dodge overflow
  const double logh = std::log(0.5 * u);
  double sum = 0.0;
  double log_term0 = nu * logh - log_gamma(nu + 1.0);
  double term = std::exp(log_term0);
  for (int n = 0; n < ctrl.max_terms; ++n) {
    sum += term;
    const double next = term * (0.25 * u * u) / ((n + 1.0) * (n + 1.0 + nu));
    if (next < ctrl.abs_tol * sum && next < 1e-300 + ctrl.rel_tol * sum) return sum;
    term = next;
  }
  if (term > ctrl.rel_tol * std::fabs(sum))
    throw NumericError("bessel_i series did not converge");
  return sum;
}

double reg_lower_gamma(double nu, double u) {
  if (!(nu > 0.0)) throw EvalDomainError("reg_lower_gamma requires nu > 0");
  if (u < 0.0) throw EvalDomainError("reg_lower_gamma requires u >= 0");
  if (u == 0.0) return 0.0;

  if (u < nu + 1.0) {
    // series for P(nu, u)
    double ap = nu;
    double sum = 1.0 / nu;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= u / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-16)
        return sum * std::exp(-u + nu * std::log(u) - log_gamma(nu));
    }
    throw NumericError("reg_lower_gamma series did not converge");
  }
  // Lentz continued fraction for Q(nu, u)
  const double tiny = 1e-300;
  double b = u + 1.0 - nu;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - nu);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) {
      const double q = std::exp(-u + nu * std::log(u) - log_gamma(nu)) * h;
      return 1.0 - q;
    }
  }
  throw NumericError("reg_lower_gamma continued fraction did not converge");
}

double theta_series(double t, double u, double v, const SeriesControl& ctrl) {
  if (!(t > 0.0) || !(v > 0.0))
    throw EvalDomainError("theta_series requires t > 0, v > 0");
  const double norm = 1.0 / std::sqrt(2.0 * M_PI * t * t * t);
  auto term = [&](long k) {
    const double a = v - u + 2.0 * static_cast<double>(k) * v;
    return a * norm * std::exp(-a * a / (2.0 * t));
  };
  double sum = term(0);
  long k = 1;
  for (;;) {
    sum += term(k) + term(-k);
    // Gaussian envelope of the next shell; terms decay in exp(-k^2),
    // so a single geometric factor of 2 covers the whole remaining tail
    const double a_next = std::fabs(v - u) + 2.0 * static_cast<double>(k + 1) * v;
    const double a_low = 2.0 * static_cast<double>(k + 1) * v - std::fabs(v - u) - v;
    const double a_min = std::max(std::min(a_next, std::fabs(a_low)), 0.0);
    const double bound = 2.0 * (a_next + v) * norm * std::exp(-a_min * a_min / (2.0 * t));
    if (2.0 * bound < ctrl.abs_tol) break;
    ++k;
    if (k > ctrl.max_terms)
      throw NumericError("theta_series did not converge by max_terms");
  }
  return sum;
}

double inv_laplace_i(double t, double z, const SeriesControl& ctrl) {
  if (!(t > 0.0) || !(z > 0.0))
    throw EvalDomainError("inv_laplace_i requires t > 0, z > 0");
  const double prefactor =
      z * std::exp(M_PI * M_PI / (4.0 * t)) / (M_PI * std::sqrt(M_PI * t));

  auto integrand = [&](double u) {
    const double expo = -z * std::cosh(u) - u * u / (4.0 * t);
    if (expo < -745.0) return 0.0;
    return std::exp(expo) * std::sinh(u) * std::sin(M_PI * u / (2.0 * t));
  };
  // envelope used for truncation (drops the oscillating factor)
  auto envelope = [&](double u) {
    const double expo = -z * std::cosh(u) - u * u / (4.0 * t) + std::fabs(u);
    return expo < -745.0 ? 0.0 : 0.5 * std::exp(expo);
  };

  // panels split at sine zeros u = 2kt, adaptive quadrature per panel
  quad::Options qopt;
  qopt.abs_tol = ctrl.abs_tol * 1e-2;
  double total = 0.0;
  double lo = 0.0;
  const double panel_width = 2.0 * t;
  for (int k = 1; k <= 100000; ++k) {
    const double hi = panel_width * static_cast<double>(k);
    quad::Result r = quad::integrate(integrand, lo, hi, qopt);
    if (r.domain_error) throw EvalDomainError("inv_laplace_i: bad integrand");
    total += r.value;
    lo = hi;
    if (envelope(hi) * panel_width < ctrl.abs_tol * 1e-2 && hi > 1.0) break;
    if (k == 100000)
      throw NumericError("inv_laplace_i: truncation point not reached");
  }
  return prefactor * total;
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

}  // namespace blowup::special
