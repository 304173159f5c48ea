#include "blowup/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "blowup/errors.hpp"
#include "blowup/rng.hpp"

namespace blowup::mc {

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::euler_raw: return "euler_raw";
    case Scheme::euler_lamperti: return "euler_lamperti";
    case Scheme::dds_exact: return "dds_exact";
    case Scheme::timechange_natural: return "timechange_natural";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "euler_raw") return Scheme::euler_raw;
  if (name == "euler_lamperti") return Scheme::euler_lamperti;
  if (name == "dds_exact") return Scheme::dds_exact;
  if (name == "timechange_natural") return Scheme::timechange_natural;
  throw ConfigError("unknown scheme '" + name + "'");
}

namespace {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("BLOWUP_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

// probability that a Brownian bridge between (x0, x1) over dt with unit
// dispersion crosses the level m lying on one side of both endpoints
double bridge_crossing(double x0, double x1, double m, double dt) {
  const double d0 = m - x0, d1 = m - x1;
  if (d0 * d1 <= 0.0) return 1.0;  // endpoints straddle the level
  const double e = -2.0 * d0 * d1 / dt;
  return e < -700.0 ? 0.0 : std::exp(e);
}

}  // namespace

Simulator::Simulator(const DiffusionSpec& spec, double xi, const SimConfig& cfg,
                     bool driftless)
    : spec_(spec), xi_(xi), cfg_(cfg), driftless_(driftless) {
  if (cfg_.t_grid.empty()) throw ConfigError("simulation needs a nonempty T grid");
  for (size_t i = 1; i < cfg_.t_grid.size(); ++i)
    if (!(cfg_.t_grid[i] > cfg_.t_grid[i - 1]))
      throw ConfigError("T grid must be strictly increasing");
  if (cfg_.ladder.depth() < 1) throw ConfigError("simulation needs a ladder");
  if (!(cfg_.step > 0.0)) throw ConfigError("step must be positive");
  if (!spec_.interval.contains(xi))
    throw ConfigError("xi must lie inside the state interval");
  t_max_ = cfg_.t_grid.back();

  const int n = cfg_.ladder.depth();
  if (cfg_.scheme == Scheme::euler_lamperti || cfg_.scheme == Scheme::dds_exact) {
    if (!spec_.has_s_deriv())
      throw ConfigError(std::string(to_string(cfg_.scheme)) +
                        " needs the derivative of s; declare s differentiable");
    const double lo = std::min(cfg_.ladder.lower(n), xi);
    const double hi = std::max(cfg_.ladder.upper(n), xi);
    frame_ = std::make_shared<transform::LampertiFrame>(spec_, cfg_.ladder.anchor,
                                                        lo, hi);
    y_lo_.resize(n);
    y_hi_.resize(n);
    for (int level = 1; level <= n; ++level) {
      y_lo_[level - 1] = frame_->map(cfg_.ladder.lower(level));
      y_hi_[level - 1] = frame_->map(cfg_.ladder.upper(level));
    }
    if (cfg_.scheme == Scheme::dds_exact) {
      double max_mu = 0.0;
      for (double x : model::probe_points(spec_.interval, 25)) {
        if (x < frame_->range_lo() || x > frame_->range_hi()) continue;
        const double mu = (driftless_ ? 0.0 : spec_.b_prog(x)) -
                          0.5 * (*spec_.s_deriv_prog)(x);
        if (std::isfinite(mu)) max_mu = std::max(max_mu, std::fabs(mu));
      }
      mu_zero_ = max_mu < 1e-13;
    }
  }
  if (cfg_.scheme == Scheme::timechange_natural && !driftless_ && !spec_.driftless)
    throw ConfigError("timechange_natural applies to driftless diffusions only");
}

PathSample Simulator::run(long path_index) const {
  switch (cfg_.scheme) {
    case Scheme::euler_raw:
    case Scheme::euler_lamperti:
      return run_euler(path_index);
    case Scheme::dds_exact:
      return run_dds(path_index);
    case Scheme::timechange_natural:
      return run_natural(path_index);
  }
  throw ConfigError("unknown scheme");
}

// shared bookkeeping for grid snapshots and weight ingredients
namespace {

struct StepAccounting {
  const std::vector<double>& grid;
  PathSample& out;
  size_t next_grid = 0;
  double int_v = 0.0, int_bdw = 0.0, int_b2 = 0.0;

  StepAccounting(const std::vector<double>& grid, PathSample& out)
      : grid(grid), out(out) {
    out.at_grid.resize(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) out.at_grid[i].t = grid[i];
  }

  bool done() const { return next_grid >= grid.size(); }

  void snapshot(double state) {
    auto& g = out.at_grid[next_grid];
    g.alive = true;
    g.state = state;
    g.int_v_dt = int_v;
    g.int_b_dw = int_bdw;
    g.int_b2_dt = int_b2;
    ++next_grid;
  }

  void kill_rest(double explosion_time) {
    for (size_t k = next_grid; k < grid.size(); ++k)
      out.at_grid[k].alive = explosion_time > grid[k];
    // a level-censored survivor keeps alive flags; an exploded path dies
  }
};

}  // namespace

PathSample Simulator::run_euler(long path_index) const {
  const bool lamperti = cfg_.scheme == Scheme::euler_lamperti;
  PathSample out;
  out.level_exit_times.assign(cfg_.ladder.depth(),
                              std::numeric_limits<double>::infinity());
  StepAccounting acct(cfg_.t_grid, out);
  const int n_levels = cfg_.ladder.depth();
  const double sign = spec_.dispersion_sign;

  // position in scheme coordinates plus the matching x-state
  double pos, x_state;
  if (lamperti) {
    pos = frame_->map(xi_);
    x_state = xi_;
  } else {
    pos = xi_;
    x_state = xi_;
  }
  auto level_lo = [&](int level) {
    return lamperti ? y_lo_[level - 1] : cfg_.ladder.lower(level);
  };
  auto level_hi = [&](int level) {
    return lamperti ? y_hi_[level - 1] : cfg_.ladder.upper(level);
  };

  // smallest level containing p, or n_levels + 1
  auto containing = [&](double p) {
    int n = 1;
    while (n <= n_levels && !(p > level_lo(n) && p < level_hi(n))) ++n;
    return n;
  };
  int level = containing(pos);
  for (int n = 1; n < level; ++n) {
    out.level_exit_times[n - 1] = 0.0;
    out.deepest_level = n;
  }
  if (level > n_levels)
    throw ConfigError("xi lies outside the outermost truncation level");

  auto drift = [&](double x) {
    const double b = driftless_ ? 0.0 : spec_.b_prog(x);
    if (lamperti) return sign * (b - 0.5 * (*spec_.s_deriv_prog)(x));
    return spec_.s_prog(x) * b;
  };
  auto b_of = [&](double x) { return spec_.b_prog(x); };
  auto v_of = [&](double x) {
    const double b = spec_.b_prog(x);
    return 0.5 * (b * b + spec_.b_deriv_prog(x) * spec_.s_prog(x) -
                  b * (*spec_.s_deriv_prog)(x));
  };
  const bool track_weights = driftless_;
  const bool v_available = spec_.has_s_deriv();

  // first exits recorded once; the step size follows the current level
  // (and recovers when the path comes back inside)
  auto record_exits = [&](int up_to, double when) {
    for (int n = 1; n < up_to && n <= n_levels; ++n) {
      if (std::isinf(out.level_exit_times[n - 1])) {
        out.level_exit_times[n - 1] = when;
        out.deepest_level = std::max(out.deepest_level, n);
      }
    }
  };
  auto dt_for = [&](int lvl) {
    return cfg_.step / std::ldexp(1.0, std::min(lvl, 10) - 1);
  };

  double t = 0.0;
  uint64_t step_index = 0;
  if (cfg_.record_path) {
    out.times.push_back(0.0);
    out.states.push_back(x_state);
  }

  while (!acct.done()) {
    // land exactly on pending grid times
    if (std::fabs(cfg_.t_grid[acct.next_grid] - t) <= 1e-12 * std::max(1.0, t)) {
      acct.snapshot(x_state);
      continue;
    }
    double dt = std::min(dt_for(level), cfg_.t_grid[acct.next_grid] - t);
    const auto draw = rng::philox(cfg_.seed, static_cast<uint64_t>(path_index),
                                  step_index++);
    const double z = rng::inverse_normal_cdf(rng::to_uniform(draw.a));
    const double dw = std::sqrt(dt) * z;

    double pos_new;
    if (lamperti) {
      pos_new = pos + drift(x_state) * dt + dw;
    } else {
      pos_new = pos + spec_.s_prog(x_state) * (dw + (driftless_ ? 0.0 : b_of(x_state)) * dt);
    }

    const double t_new = t + dt;
    bool exploded = false;
    if (std::isnan(pos_new)) {
      // state left the representable region; counts as crossing everything
      record_exits(n_levels + 1, t_new);
      exploded = true;
    } else {
      level = containing(pos_new);
      record_exits(level, t_new);
      if (level > n_levels) exploded = true;
    }

    if (!exploded && cfg_.bridge_correction) {
      // within-step crossing of the outermost truncation, exact for the
      // unit-dispersion coordinate and first-order for raw coordinates
      const double var = lamperti
                             ? dt
                             : dt * spec_.s_prog(x_state) * spec_.s_prog(x_state);
      if (var > 0.0) {
        const double p_low = bridge_crossing(pos, pos_new, level_lo(n_levels), var);
        const double p_high = bridge_crossing(pos, pos_new, level_hi(n_levels), var);
        const double p = std::min(1.0, p_low + p_high);
        if (rng::to_uniform(draw.b) < p) {
          record_exits(n_levels + 1, t_new);
          exploded = true;
        }
      }
    }

    if (exploded) {
      out.exploded = true;
      out.explosion_time = t_new;
      acct.kill_rest(t_new);
      return out;  // the recorded path is the surviving prefix
    }

    double x_new = lamperti ? frame_->inverse(pos_new) : pos_new;
    if (track_weights) {
      if (v_available)
        acct.int_v += 0.5 * (v_of(x_state) + v_of(x_new)) * dt;
      const double b_left = b_of(x_state);
      // dW of the driftless companion; the map flips the noise sign when s < 0
      acct.int_bdw += b_left * (lamperti ? sign * dw : dw);
      acct.int_b2 += b_left * b_left * dt;
    }

    pos = pos_new;
    x_state = x_new;
    t = t_new;
    if (cfg_.record_path) {
      out.times.push_back(t);
      out.states.push_back(x_state);
    }
  }
  return out;
}

PathSample Simulator::run_dds(long path_index) const {
  PathSample out;
  out.level_exit_times.assign(cfg_.ladder.depth(),
                              std::numeric_limits<double>::infinity());
  StepAccounting acct(cfg_.t_grid, out);
  const int n_levels = cfg_.ladder.depth();
  const double sign = spec_.dispersion_sign;

  auto mu = [&](double x) {
    return (driftless_ ? 0.0 : spec_.b_prog(x)) - 0.5 * (*spec_.s_deriv_prog)(x);
  };
  auto theta_arg = [&](double c, double w) { return frame_->map(c) + sign * w; };

  double c_state = xi_;
  double w_cum = 0.0;
  double pos = theta_arg(c_state, 0.0);  // transformed coordinate of X
  double x_state = xi_;

  auto containing = [&](double p) {
    int n = 1;
    while (n <= n_levels && !(p > y_lo_[n - 1] && p < y_hi_[n - 1])) ++n;
    return n;
  };
  auto record_exits = [&](int up_to, double when) {
    for (int n = 1; n < up_to && n <= n_levels; ++n) {
      if (std::isinf(out.level_exit_times[n - 1])) {
        out.level_exit_times[n - 1] = when;
        out.deepest_level = std::max(out.deepest_level, n);
      }
    }
  };
  auto dt_for = [&](int lvl) {
    return cfg_.step / std::ldexp(1.0, std::min(lvl, 10) - 1);
  };
  int level = containing(pos);
  record_exits(level, 0.0);
  if (level > n_levels)
    throw ConfigError("xi lies outside the outermost truncation level");

  auto slope = [&](double x_at, double c) { return mu(x_at) * spec_.s_prog(c); };
  const double y_min = frame_->map(frame_->range_lo());
  const double y_max = frame_->map(frame_->range_hi());
  auto x_of = [&](double c, double w) {
    double arg = theta_arg(c, w);
    arg = std::clamp(arg, y_min, y_max);
    return frame_->inverse(arg);
  };

  double t = 0.0;
  uint64_t step_index = 0;
  if (cfg_.record_path) {
    out.times.push_back(0.0);
    out.states.push_back(x_state);
  }

  while (!acct.done()) {
    if (std::fabs(cfg_.t_grid[acct.next_grid] - t) <= 1e-12 * std::max(1.0, t)) {
      acct.snapshot(x_state);
      continue;
    }
    double dt = std::min(dt_for(level), cfg_.t_grid[acct.next_grid] - t);
    const auto draw = rng::philox(cfg_.seed, static_cast<uint64_t>(path_index),
                                  step_index++);
    const double z = rng::inverse_normal_cdf(rng::to_uniform(draw.a));
    const double dw = std::sqrt(dt) * z;
    const double w_new = w_cum + dw;

    double c_new = c_state;
    if (!mu_zero_) {
      // classical 4th-order step with the Brownian path linearly
      // interpolated at the half point
      const double w_half = w_cum + 0.5 * dw;
      const double k1 = slope(x_of(c_state, w_cum), c_state);
      const double k2 = slope(x_of(c_state + 0.5 * dt * k1, w_half),
                              c_state + 0.5 * dt * k1);
      const double k3 = slope(x_of(c_state + 0.5 * dt * k2, w_half),
                              c_state + 0.5 * dt * k2);
      const double k4 = slope(x_of(c_state + dt * k3, w_new), c_state + dt * k3);
      c_new = c_state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!(c_new > frame_->range_lo() && c_new < frame_->range_hi()) ||
          std::isnan(c_new)) {
        // subindex ran off the working range: treat as crossing everything
        c_new = std::numeric_limits<double>::quiet_NaN();
      }
    }

    const double t_new = t + dt;
    double pos_new = std::isnan(c_new) ? std::numeric_limits<double>::quiet_NaN()
                                       : theta_arg(c_new, w_new);
    bool exploded = false;
    if (std::isnan(pos_new)) {
      record_exits(n_levels + 1, t_new);
      exploded = true;
    } else {
      level = containing(pos_new);
      record_exits(level, t_new);
      if (level > n_levels) exploded = true;
    }

    if (!exploded && cfg_.bridge_correction) {
      const double p_low = bridge_crossing(pos, pos_new, y_lo_[n_levels - 1], dt);
      const double p_high = bridge_crossing(pos, pos_new, y_hi_[n_levels - 1], dt);
      const double p = std::min(1.0, p_low + p_high);
      if (rng::to_uniform(draw.b) < p) {
        record_exits(n_levels + 1, t_new);
        exploded = true;
      }
    }

    if (exploded) {
      // bisect the offending step to localize the exit time
      double exit_time = t_new;
      if (!std::isnan(pos_new) && !cfg_.bridge_correction) {
        double ta = t, wa = w_cum, tb = t_new, wb = w_new;
        for (int it = 0; it < 20; ++it) {
          const double tm = 0.5 * (ta + tb);
          const double wm = wa + (wb - wa) * 0.5;
          const double am = theta_arg(c_state, wm);
          if (am > y_lo_[n_levels - 1] && am < y_hi_[n_levels - 1]) {
            ta = tm; wa = wm;
          } else {
            tb = tm; wb = wm;
          }
        }
        exit_time = tb;
      }
      out.exploded = true;
      out.explosion_time = exit_time;
      acct.kill_rest(exit_time);
      return out;  // the recorded path is the surviving prefix
    }

    c_state = std::isnan(c_new) ? c_state : c_new;
    w_cum = w_new;
    pos = pos_new;
    x_state = frame_->inverse(std::clamp(pos, y_min, y_max));
    t = t_new;
    if (cfg_.record_path) {
      out.times.push_back(t);
      out.states.push_back(x_state);
    }
  }
  return out;
}

PathSample Simulator::run_natural(long path_index) const {
  PathSample out;
  out.level_exit_times.assign(cfg_.ladder.depth(),
                              std::numeric_limits<double>::infinity());
  StepAccounting acct(cfg_.t_grid, out);
  const int n_levels = cfg_.ladder.depth();
  const double lo_n = cfg_.ladder.lower(n_levels);
  const double hi_n = cfg_.ladder.upper(n_levels);

  auto inv_s2 = [&](double x) {
    const double s = spec_.s_prog(x);
    return 1.0 / (s * s);
  };
  auto v_of = [&](double x) {
    if (!spec_.has_s_deriv()) return 0.0;
    const double b = spec_.b_prog(x);
    return 0.5 * (b * b + spec_.b_deriv_prog(x) * spec_.s_prog(x) -
                  b * (*spec_.s_deriv_prog)(x));
  };

  double b_path = 0.0;          // auxiliary Brownian motion
  double x = xi_;
  double gamma = 0.0;           // accumulated diffusion time
  double g_old = inv_s2(x);
  int level = 1;
  uint64_t step_index = 0;
  const double gamma_target = cfg_.step;  // per-step increment of diffusion time
  const double delta_floor = cfg_.step * std::ldexp(1.0, -40);
  const uint64_t max_steps = 200000000;

  if (cfg_.record_path) {
    out.times.push_back(0.0);
    out.states.push_back(x);
  }

  while (!acct.done()) {
    if (std::fabs(cfg_.t_grid[acct.next_grid] - gamma) <=
        1e-12 * std::max(1.0, gamma)) {
      acct.snapshot(x);
      continue;
    }
    if (step_index >= max_steps) {
      out.refinement_censored = true;
      acct.kill_rest(std::numeric_limits<double>::infinity());
      return out;
    }
    // theta step sized so the diffusion-time increment stays near
    // gamma_target, boundary jumps stay improbable, and the integrand
    // 1/s^2 moves by a bounded fraction per step (otherwise the quadrature
    // of Gamma misses the occupation time of wide excursions)
    const double dist = std::min(x - lo_n, hi_n - x);
    double delta = gamma_target / std::max(g_old, 1e-300);
    delta = std::min(delta, dist * dist / 16.0);
    if (spec_.has_s_deriv()) {
      const double sp = (*spec_.s_deriv_prog)(x);
      if (sp != 0.0) {
        const double local = 0.125 * std::fabs(spec_.s_prog(x) / sp);
        delta = std::min(delta, local * local);
      }
    }
    delta = std::min(delta, 1e12);
    if (delta < delta_floor) {
      out.refinement_censored = true;
      acct.kill_rest(std::numeric_limits<double>::infinity());
      return out;
    }

    const auto draw = rng::philox(cfg_.seed, static_cast<uint64_t>(path_index),
                                  step_index++);
    const double z = rng::inverse_normal_cdf(rng::to_uniform(draw.a));
    const double b_new = b_path + std::sqrt(delta) * z;
    const double x_new = xi_ + b_new;

    bool exits_outermost = !(x_new > lo_n && x_new < hi_n);
    if (!exits_outermost && cfg_.bridge_correction) {
      const double p = std::min(1.0, bridge_crossing(x, x_new, lo_n, delta) +
                                         bridge_crossing(x, x_new, hi_n, delta));
      if (rng::to_uniform(draw.b) < p) exits_outermost = true;
    }
    if (exits_outermost) {
      // time at the crossing, by linear interpolation of Gamma in theta
      const double te = gamma + g_old * delta * 0.5;
      // the crossing may jump past pending horizons within this theta step
      while (!acct.done() && te > cfg_.t_grid[acct.next_grid]) {
        const double frac =
            std::clamp((cfg_.t_grid[acct.next_grid] - gamma) / std::max(te - gamma, 1e-300),
                       0.0, 1.0);
        acct.snapshot(x + (x_new - x) * frac);
      }
      for (int l = level; l <= n_levels; ++l) {
        out.level_exit_times[l - 1] = std::min(out.level_exit_times[l - 1], te);
        out.deepest_level = l;
      }
      out.exploded = true;
      out.explosion_time = te;
      acct.kill_rest(te);
      return out;
    }

    const double g_new = inv_s2(x_new);
    const double x_mid = 0.5 * (x + x_new);
    const double g_mid = inv_s2(x_mid);
    const double d_gamma = (g_old + 4.0 * g_mid + g_new) / 6.0 * delta;

    // grid crossings inside this theta step
    while (!acct.done() && gamma + d_gamma >= cfg_.t_grid[acct.next_grid]) {
      const double frac = (cfg_.t_grid[acct.next_grid] - gamma) / d_gamma;
      const double x_at = x + (x_new - x) * frac;
      const double saved_v = acct.int_v;
      acct.int_v += 0.5 * (v_of(x) * g_old + v_of(x_at) * inv_s2(x_at)) *
                    (delta * frac);
      acct.snapshot(x_at);
      acct.int_v = saved_v;  // the full-step accumulation below re-adds it
    }

    acct.int_v += (v_of(x) * g_old + 4.0 * v_of(x_mid) * g_mid +
                   v_of(x_new) * g_new) / 6.0 * delta;

    // inner ladder levels crossed (first exits only)
    while (level <= n_levels - 1 &&
           !(x_new > cfg_.ladder.lower(level) && x_new < cfg_.ladder.upper(level))) {
      out.level_exit_times[level - 1] =
          std::min(out.level_exit_times[level - 1], gamma + d_gamma);
      out.deepest_level = std::max(out.deepest_level, level);
      ++level;
    }

    gamma += d_gamma;
    b_path = b_new;
    x = x_new;
    g_old = g_new;
    if (cfg_.record_path) {
      out.times.push_back(gamma);
      out.states.push_back(x);
    }
  }
  return out;
}

PathSample simulate_path(const DiffusionSpec& spec, double xi, const SimConfig& cfg,
                         long path_index) {
  Simulator sim(spec, xi, cfg, /*driftless=*/false);
  return sim.run(path_index);
}

PathSample simulate_natural_scale(const DiffusionSpec& spec, double xi, double t_horizon,
                                  const SimConfig& cfg, long path_index) {
  SimConfig natural = cfg;
  natural.scheme = Scheme::timechange_natural;
  if (natural.t_grid.empty() || natural.t_grid.back() != t_horizon)
    natural.t_grid = {t_horizon};
  Simulator sim(spec, xi, natural, /*driftless=*/true);
  return sim.run(path_index);
}

double pairwise_sum(const std::vector<double>& values) {
  std::function<double(size_t, size_t)> reduce = [&](size_t lo, size_t hi) -> double {
    if (hi - lo <= 8) {
      double s = 0.0;
      for (size_t i = lo; i < hi; ++i) s += values[i];
      return s;
    }
    const size_t mid = lo + (hi - lo) / 2;
    return reduce(lo, mid) + reduce(mid, hi);
  };
  return values.empty() ? 0.0 : reduce(0, values.size());
}

namespace {

// run all paths, storing per-path outputs at each grid horizon
struct EnsembleResult {
  // [grid][path]
  std::vector<std::vector<double>> alive;
  std::vector<std::vector<double>> weight;      // FK or stochastic-exponential
  std::vector<std::vector<double>> terminal;    // state when alive, else 0
  std::vector<std::vector<double>> outer_shell; // exited N-1 but not N by T
  std::vector<std::vector<double>> excluded;    // overflowed weights
  std::vector<double> censored;                 // [path] refinement floor hit
};

enum class WeightKind { none, feynman_kac, stochastic_exponential };

EnsembleResult run_ensemble(const Simulator& sim, const DiffusionSpec& spec,
                            WeightKind kind, double xi) {
  const SimConfig& cfg = sim.config();
  const size_t n_grid = cfg.t_grid.size();
  const long n_paths = cfg.n_paths;
  EnsembleResult res;
  res.alive.assign(n_grid, std::vector<double>(n_paths, 0.0));
  res.weight.assign(n_grid, std::vector<double>(n_paths, 0.0));
  res.terminal.assign(n_grid, std::vector<double>(n_paths, 0.0));
  res.outer_shell.assign(n_grid, std::vector<double>(n_paths, 0.0));
  res.excluded.assign(n_grid, std::vector<double>(n_paths, 0.0));
  res.censored.assign(n_paths, 0.0);

  // antiderivative of f, shared across paths for the weight exponent
  std::shared_ptr<quad::TabulatedAntiderivative> f_table;
  double f_lo = 0.0, f_hi = 0.0, f_base = 0.0;
  if (kind == WeightKind::feynman_kac) {
    auto f_fn = [&spec](double u) {
      const auto bv = spec.b_ast.eval_checked(u);
      const auto sv = spec.s_ast.eval_checked(u);
      if (!bv.ok || !sv.ok || sv.value == 0.0)
        return std::numeric_limits<double>::quiet_NaN();
      return bv.value / sv.value;
    };
    const int n = cfg.ladder.depth();
    f_table = std::make_shared<quad::TabulatedAntiderivative>(f_fn, xi, 1e-10);
    // extend outward but stop once the antiderivative leaves the range
    // that could ever produce a representable weight
    double lo = xi, hi = xi;
    const double lo_target = std::min(cfg.ladder.lower(n), xi);
    const double hi_target = std::max(cfg.ladder.upper(n), xi);
    while (hi < hi_target) {
      double next = std::min(hi_target, hi + std::max(0.25, 0.5 * std::fabs(hi)));
      try {
        f_table->ensure(lo, next);
      } catch (const NumericError&) {
        break;
      }
      hi = next;
      if (std::fabs(f_table->value(hi)) > 650.0) break;
    }
    while (lo > lo_target) {
      double next = std::max(lo_target, lo - std::max(0.25, 0.5 * std::fabs(lo)));
      try {
        f_table->ensure(next, hi);
      } catch (const NumericError&) {
        break;
      }
      lo = next;
      if (std::fabs(f_table->value(lo)) > 650.0) break;
    }
    f_lo = lo;
    f_hi = hi;
    f_base = 0.0;  // table anchored at xi, so F(xi) = 0
  }

  auto work = [&](long first, long last) {
    for (long p = first; p < last; ++p) {
      PathSample sample = sim.run(p);
      if (sample.refinement_censored) res.censored[p] = 1.0;
      const int n = cfg.ladder.depth();
      for (size_t k = 0; k < n_grid; ++k) {
        const auto& g = sample.at_grid[k];
        res.alive[k][p] = g.alive ? 1.0 : 0.0;
        if (g.alive) res.terminal[k][p] = g.state;
        const double t_k = cfg.t_grid[k];
        const bool exited_shell =
            n >= 2 && sample.level_exit_times[n - 2] <= t_k && g.alive;
        res.outer_shell[k][p] = exited_shell ? 1.0 : 0.0;
        if (!g.alive || kind == WeightKind::none) continue;
        if (sample.refinement_censored) {
          res.excluded[k][p] = 1.0;  // no trustworthy weight for this path
          continue;
        }
        if (kind == WeightKind::feynman_kac) {
          if (g.state < f_lo || g.state > f_hi) {
            res.excluded[k][p] = 1.0;
            continue;
          }
          const double exponent = f_table->value(g.state) - f_base - g.int_v_dt;
          if (std::fabs(exponent) > 700.0) {
            res.excluded[k][p] = 1.0;
            continue;
          }
          res.weight[k][p] = std::exp(exponent);
        } else {
          const double exponent = g.int_b_dw - 0.5 * g.int_b2_dt;
          if (std::fabs(exponent) > 700.0) {
            res.excluded[k][p] = 1.0;
            continue;
          }
          res.weight[k][p] = std::exp(exponent);
        }
      }
    }
  };

  const int n_threads = resolve_threads(cfg.threads);
  if (n_threads <= 1 || n_paths < 256) {
    work(0, n_paths);
  } else {
    std::vector<std::thread> pool;
    const long chunk = (n_paths + n_threads - 1) / n_threads;
    for (int tix = 0; tix < n_threads; ++tix) {
      const long first = tix * chunk;
      const long last = std::min<long>(n_paths, first + chunk);
      if (first < last) pool.emplace_back(work, first, last);
    }
    for (auto& th : pool) th.join();
  }

  return res;
}

}  // namespace

SurvivalCurve estimate_survival_direct(const DiffusionSpec& spec, double xi,
                                       const SimConfig& cfg) {
  Simulator sim(spec, xi, cfg, /*driftless=*/false);
  EnsembleResult res = run_ensemble(sim, spec, WeightKind::none, xi);

  SurvivalCurve curve;
  curve.method = "mc-direct";
  curve.n_paths = cfg.n_paths;
  const double n = static_cast<double>(cfg.n_paths);
  for (size_t k = 0; k < cfg.t_grid.size(); ++k) {
    const double survivors = pairwise_sum(res.alive[k]);
    const double p = survivors / n;
    SurvivalCurve::Point pt;
    pt.t = cfg.t_grid[k];
    pt.estimate = p;
    pt.raw = p;
    pt.stderr_ = std::sqrt(std::max(0.0, p * (1.0 - p)) / n);
    pt.n_eff = cfg.n_paths;
    pt.censored_fraction = pairwise_sum(res.outer_shell[k]) / n;
    curve.points.push_back(pt);
  }
  curve.diagnostics["seed"] = static_cast<double>(cfg.seed);
  curve.diagnostics["step"] = cfg.step;
  curve.diagnostics["ladder_depth"] = cfg.ladder.depth();
  curve.diagnostics["censored_paths"] = pairwise_sum(res.censored);
  return curve;
}

SurvivalCurve estimate_survival_feynman_kac(const DiffusionSpec& spec, double xi,
                                            const SimConfig& cfg) {
  WeightKind kind;
  if (spec.f_continuously_differentiable && spec.has_s_deriv())
    kind = WeightKind::feynman_kac;
  else if (spec.f_locally_square_integrable)
    kind = WeightKind::stochastic_exponential;
  else
    throw ConfigError("weighted estimator needs f locally square-integrable "
                      "(declared on the spec)");
  if (kind == WeightKind::stochastic_exponential &&
      cfg.scheme == Scheme::timechange_natural)
    throw ConfigError("the stochastic-exponential route needs an euler scheme "
                      "(driving increments are not tracked under the time change)");

  Simulator sim(spec, xi, cfg, /*driftless=*/true);
  EnsembleResult res = run_ensemble(sim, spec, kind, xi);

  SurvivalCurve curve;
  curve.method = kind == WeightKind::feynman_kac ? "mc-fk" : "mc-girsanov";
  curve.n_paths = cfg.n_paths;
  double total_excluded = 0.0;
  for (size_t k = 0; k < cfg.t_grid.size(); ++k) {
    const double excluded = pairwise_sum(res.excluded[k]);
    const double n_eff = static_cast<double>(cfg.n_paths) - excluded;
    const double sum_w = pairwise_sum(res.weight[k]);
    std::vector<double> w2(res.weight[k].size());
    for (size_t i = 0; i < w2.size(); ++i) w2[i] = res.weight[k][i] * res.weight[k][i];
    const double sum_w2 = pairwise_sum(w2);
    const double mean = n_eff > 0 ? sum_w / n_eff : 0.0;
    const double var =
        n_eff > 1 ? std::max(0.0, (sum_w2 - n_eff * mean * mean) / (n_eff - 1.0)) : 0.0;
    SurvivalCurve::Point pt;
    pt.t = cfg.t_grid[k];
    pt.estimate = std::min(1.0, std::max(0.0, mean));
    pt.raw = mean;
    pt.stderr_ = n_eff > 0 ? std::sqrt(var / n_eff) : 0.0;
    pt.n_eff = static_cast<long>(n_eff);
    pt.censored_fraction = pairwise_sum(res.outer_shell[k]) / cfg.n_paths;
    curve.points.push_back(pt);
    total_excluded += excluded;
  }
  curve.diagnostics["seed"] = static_cast<double>(cfg.seed);
  curve.diagnostics["step"] = cfg.step;
  curve.diagnostics["excluded_weights"] = total_excluded;
  curve.diagnostics["censored_paths"] = pairwise_sum(res.censored);
  return curve;
}

}  // namespace blowup::mc
