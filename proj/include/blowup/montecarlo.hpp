#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "blowup/model.hpp"
#include "blowup/survival_curve.hpp"
#include "blowup/transform.hpp"

namespace blowup::mc {

enum class Scheme { euler_raw, euler_lamperti, dds_exact, timechange_natural };

const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& name);

struct SimConfig {
  double step = 1e-3;          // base time step; halves at each deeper ladder level
  long n_paths = 10000;
  uint64_t seed = 1;
  TruncationLadder ladder;
  Scheme scheme = Scheme::euler_lamperti;
  std::vector<double> t_grid;  // strictly increasing horizons
  bool record_path = false;    // keep the full trajectory (tests only)
  bool bridge_correction = true;
  int threads = 0;             // 0: BLOWUP_THREADS env var, else 1
};

struct PathSample {
  std::vector<double> times, states;       // only filled when record_path
  bool exploded = false;
  double explosion_time = std::numeric_limits<double>::infinity();
  int deepest_level = 0;                   // deepest ladder level exited
  std::vector<double> level_exit_times;    // exit time of level n at index n-1
  bool refinement_censored = false;        // step floor hit (natural-scale route)

  struct GridStat {
    double t = 0.0;
    bool alive = false;
    double state = 0.0;      // X(t) when alive
    double int_v_dt = 0.0;   // time integral of V along the path
    double int_b_dw = 0.0;   // Ito integral of b against the driving noise
    double int_b2_dt = 0.0;
  };
  std::vector<GridStat> at_grid;
};

// Reusable per-spec simulation context (frame tables, mapped ladder
// bounds, antiderivative cache).  Immutable after construction; run() is
// safe to call concurrently for different path indices.
class Simulator {
 public:
  // driftless = true simulates the companion process with b removed
  Simulator(const DiffusionSpec& spec, double xi, const SimConfig& cfg, bool driftless);
  PathSample run(long path_index) const;

  const SimConfig& config() const { return cfg_; }
  double xi() const { return xi_; }

 private:
  PathSample run_euler(long path_index) const;
  PathSample run_dds(long path_index) const;
  PathSample run_natural(long path_index) const;

  DiffusionSpec spec_;
  double xi_;
  SimConfig cfg_;
  bool driftless_;
  std::shared_ptr<transform::LampertiFrame> frame_;
  std::vector<double> y_lo_, y_hi_;  // ladder bounds in transformed coordinates
  bool mu_zero_ = false;             // dds fast path: constant subindex
  double t_max_ = 0.0;
};

PathSample simulate_path(const DiffusionSpec& spec, double xi, const SimConfig& cfg,
                         long path_index);

// Exact-in-law simulation of the driftless companion by time-changing a
// Brownian path: Gamma(theta) = int_0^theta s(xi+B)^-2, X(t) = xi + B(A(t)).
PathSample simulate_natural_scale(const DiffusionSpec& spec, double xi, double t_horizon,
                                  const SimConfig& cfg, long path_index);

// Fraction of paths whose explosion estimate exceeds each grid horizon.
// Level-censored paths (still inside the outermost truncation) count as
// survivors; the censored_fraction column bounds the verdicts that could
// flip if the ladder were one level deeper.
SurvivalCurve estimate_survival_direct(const DiffusionSpec& spec, double xi,
                                       const SimConfig& cfg);

// Weighted representation: mean of
//   exp(F(X(T)) - F(xi) - int_0^T V(X(t)) dt) 1{alive}
// over driftless companion paths when f is continuously differentiable;
// falls back to the stochastic-exponential weight
//   exp(int b dW - 1/2 int b^2 dt) 1{alive}
// when only local square-integrability of f is declared.
SurvivalCurve estimate_survival_feynman_kac(const DiffusionSpec& spec, double xi,
                                            const SimConfig& cfg);

// Deterministic indexed pairwise reduction (bitwise reproducible).
double pairwise_sum(const std::vector<double>& values);

}  // namespace blowup::mc
