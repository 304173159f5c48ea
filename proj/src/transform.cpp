#include "blowup/transform.hpp"

#include <algorithm>
#include <cmath>

#include "blowup/errors.hpp"

namespace blowup::transform {

namespace {

quad::Fn abs_inv_s(const DiffusionSpec& spec) {
  return [&spec](double z) {
    const auto sv = spec.s_ast.eval_checked(z);
    if (!sv.ok || sv.value == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return 1.0 / std::fabs(sv.value);
  };
}

}  // namespace

LampertiFrame::LampertiFrame(const DiffusionSpec& spec, double anchor, double x_lo,
                             double x_hi)
    : spec_(&spec), anchor_(anchor), sign_(spec.dispersion_sign), x_lo_(x_lo),
      x_hi_(x_hi) {
  if (!spec.has_s_deriv())
    throw ConfigError("lamperti frame needs the derivative of s; construct the "
                      "spec with differentiable_s");
  if (!(x_lo < anchor && anchor < x_hi) || !spec.interval.contains(x_lo) ||
      !spec.interval.contains(x_hi))
    throw ConfigError("lamperti frame range must contain the anchor and lie in "
                      "the state interval");
  table_ = std::make_shared<quad::TabulatedAntiderivative>(abs_inv_s(spec), anchor,
                                                           1e-12);
  table_->ensure(x_lo, x_hi);

  // transformed endpoints: finite exactly when the integral of 1/|s|
  // converges at the corresponding boundary
  auto side_limit = [&](double endpoint, bool left) {
    const double interior = left ? x_lo : x_hi;
    const double base = table_->value(interior);
    if (endpoint == interior) return base;
    quad::TailOptions topt;
    topt.levels = 64;
    auto probe = quad::probe_improper(abs_inv_s(spec), interior, endpoint, topt);
    if (probe.verdict == quad::TailVerdict::divergent)
      return left ? -std::numeric_limits<double>::infinity()
                  : std::numeric_limits<double>::infinity();
    if (probe.verdict == quad::TailVerdict::finite) return base + probe.partial;
    return std::numeric_limits<double>::quiet_NaN();
  };
  mapped_left_ = side_limit(spec.interval.left, true);
  mapped_right_ = side_limit(spec.interval.right, false);
}

double LampertiFrame::map(double x) const { return table_->value(x); }

double LampertiFrame::inverse(double y) const { return table_->inverse(y); }

double LampertiFrame::unit_drift(double y) const {
  const double x = inverse(y);
  const double sp = (*spec_->s_deriv_prog)(x);
  return sign_ * (spec_->b_prog(x) - 0.5 * sp);
}

LampertiFrame make_frame(const DiffusionSpec& spec, double anchor, double x_lo,
                         double x_hi) {
  return LampertiFrame(spec, anchor, x_lo, x_hi);
}

DdsPath dds_path(const LampertiFrame& frame, const std::function<double(double)>& mu,
                 const std::vector<double>& times, const std::vector<double>& brownian,
                 double xi) {
  if (times.size() != brownian.size() || times.size() < 2)
    throw ConfigError("dds_path needs matching, nonempty time and path vectors");
  const DiffusionSpec& spec = frame.spec();
  const double sign = frame.noise_sign();
  const double y_lo = frame.map(frame.range_lo());
  const double y_hi = frame.map(frame.range_hi());

  // probe local Lipschitz continuity of mu on the working range
  {
    const double span = frame.range_hi() - frame.range_lo();
    double max_mu = 0.0;
    for (int i = 1; i <= 24; ++i) {
      const double x = frame.range_lo() + span * i / 25.0;
      const double d1 = std::fabs(mu(x + 1e-3) - mu(x)) / 1e-3;
      const double d2 = std::fabs(mu(x + 1e-6) - mu(x)) / 1e-6;
      if (!std::isfinite(d1) || !std::isfinite(d2))
        throw ConfigError("dds_path: mu not evaluable on the working range");
      if (d2 > 8.0 * d1 + 1.0)
        throw ConfigError("dds_path: mu does not look locally Lipschitz near x=" +
                          std::to_string(x));
      max_mu = std::max(max_mu, std::fabs(mu(x)));
    }
    if (max_mu == 0.0) {
      // constant-subindex fast path: C stays at xi
      DdsPath out;
      const double base = frame.map(xi);
      for (size_t i = 0; i < times.size(); ++i) {
        const double arg = base + sign * brownian[i];
        if (arg <= y_lo || arg >= y_hi) {
          out.exited = true;
          out.exit_index = i;
          // bisect the offending step with linear Brownian interpolation
          double t0 = times[i ? i - 1 : 0], t1 = times[i];
          double w0 = brownian[i ? i - 1 : 0], w1 = brownian[i];
          for (int it = 0; it < 20 && i > 0; ++it) {
            const double tm = 0.5 * (t0 + t1), wm = 0.5 * (w0 + w1);
            const double am = base + sign * wm;
            if (am <= y_lo || am >= y_hi) {
              t1 = tm; w1 = wm;
            } else {
              t0 = tm; w0 = wm;
            }
          }
          out.exit_time = t1;
          return out;
        }
        out.times.push_back(times[i]);
        out.x.push_back(frame.inverse(arg));
      }
      return out;
    }
  }

  DdsPath out;
  double c_state = xi;
  auto theta = [&](double c, double w) {
    double arg = frame.map(c) + sign * w;
    arg = std::clamp(arg, y_lo, y_hi);
    return frame.inverse(arg);
  };
  auto slope = [&](double t0, double w0, double t1, double w1, double t, double c) {
    const double w = (t1 == t0) ? w0 : w0 + (w1 - w0) * (t - t0) / (t1 - t0);
    return mu(theta(c, w)) * spec.s(c);
  };
  auto rk4 = [&](double t0, double w0, double t1, double w1, double c) {
    const double h = t1 - t0;
    const double k1 = slope(t0, w0, t1, w1, t0, c);
    const double k2 = slope(t0, w0, t1, w1, t0 + 0.5 * h, c + 0.5 * h * k1);
    const double k3 = slope(t0, w0, t1, w1, t0 + 0.5 * h, c + 0.5 * h * k2);
    const double k4 = slope(t0, w0, t1, w1, t1, c + h * k3);
    return c + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };

  out.times.push_back(times[0]);
  out.x.push_back(theta(c_state, brownian[0]));
  for (size_t i = 1; i < times.size(); ++i) {
    const double t0 = times[i - 1], t1 = times[i];
    const double w0 = brownian[i - 1], w1 = brownian[i];
    double c_next = rk4(t0, w0, t1, w1, c_state);
    // keep the subindex inside the interval; bisect the step if it leaves
    int halvings = 0;
    double ta = t0, wa = w0, ca = c_state;
    while (!spec.interval.contains(c_next) ||
           !(c_next > frame.range_lo() && c_next < frame.range_hi())) {
      if (++halvings > 40) break;
      const double tm = 0.5 * (ta + t1);
      const double wm = wa + (w1 - wa) * (tm - ta) / (t1 - ta);
      double c_half = rk4(ta, wa, tm, wm, ca);
      if (spec.interval.contains(c_half) && c_half > frame.range_lo() &&
          c_half < frame.range_hi()) {
        ta = tm; wa = wm; ca = c_half;
        c_next = rk4(ta, wa, t1, w1, ca);
      } else {
        c_next = c_half;
        break;
      }
    }
    const double arg = (spec.interval.contains(c_next) &&
                        c_next >= frame.range_lo() && c_next <= frame.range_hi())
                           ? frame.map(c_next) + sign * w1
                           : (y_lo - 1.0);  // subindex escaped: count as exit
    if (arg <= y_lo || arg >= y_hi) {
      out.exited = true;
      out.exit_index = i;
      // bisection localizes the exit to step * 2^-20
      double ta2 = t0, wa2 = w0, ca2 = c_state, tb = t1, wb = w1;
      for (int it = 0; it < 20; ++it) {
        const double tm = 0.5 * (ta2 + tb);
        const double wm = wa2 + (wb - wa2) * (tm - ta2) / (tb - ta2);
        const double cm = rk4(ta2, wa2, tm, wm, ca2);
        bool inside = spec.interval.contains(cm) && cm >= frame.range_lo() &&
                      cm <= frame.range_hi();
        if (inside) {
          const double am = frame.map(cm) + sign * wm;
          inside = am > y_lo && am < y_hi;
        }
        if (inside) {
          ta2 = tm; wa2 = wm; ca2 = cm;
        } else {
          tb = tm; wb = wm;
        }
      }
      out.exit_time = tb;
      return out;
    }
    c_state = c_next;
    out.times.push_back(t1);
    out.x.push_back(frame.inverse(arg));
  }
  return out;
}

WeightedSample feynman_kac_weight(const DiffusionSpec& spec,
                                  const std::vector<double>& times,
                                  const std::vector<double>& states, bool survived) {
  if (times.size() != states.size() || times.empty())
    throw ConfigError("feynman_kac_weight needs matching, nonempty vectors");
  if (!spec.f_continuously_differentiable)
    throw ConfigError("feynman_kac_weight needs f declared continuously "
                      "differentiable (the potential V must exist)");
  WeightedSample out;
  out.terminal = states.back();
  out.survived = survived;
  if (!survived) return out;

  double int_v = 0.0;
  for (size_t i = 1; i < times.size(); ++i) {
    const double dt = times[i] - times[i - 1];
    int_v += 0.5 * (model::potential_V(spec, states[i - 1]) +
                    model::potential_V(spec, states[i])) * dt;
  }
  out.int_v_dt = int_v;
  const double delta_f = model::antiderivative_F(spec, states.front(), states.back());
  const double exponent = delta_f - int_v;
  if (std::fabs(exponent) > 700.0) {
    out.overflowed = true;
    return out;
  }
  out.weight = std::exp(exponent);
  return out;
}

WeightedSample girsanov_weight(const DiffusionSpec& spec,
                               const std::vector<double>& times,
                               const std::vector<double>& states,
                               const std::vector<double>& brownian_increments,
                               bool survived) {
  if (times.size() != states.size() || times.size() != brownian_increments.size() + 1)
    throw ConfigError("girsanov_weight needs n states and n-1 increments");
  if (!spec.f_locally_square_integrable)
    throw ConfigError("girsanov_weight needs f declared locally square-integrable");
  WeightedSample out;
  out.terminal = states.back();
  out.survived = survived;
  double int_b_dw = 0.0, int_b2 = 0.0;
  for (size_t i = 1; i < times.size(); ++i) {
    const double dt = times[i] - times[i - 1];
    const double bv = spec.b(states[i - 1]);  // left-point evaluation
    int_b_dw += bv * brownian_increments[i - 1];
    int_b2 += bv * bv * dt;
  }
  out.int_b_dw = int_b_dw;
  out.int_b2_dt = int_b2;
  if (!survived) return out;
  const double exponent = int_b_dw - 0.5 * int_b2;
  if (std::fabs(exponent) > 700.0) {
    out.overflowed = true;
    return out;
  }
  out.weight = std::exp(exponent);
  return out;
}

}  // namespace blowup::transform
