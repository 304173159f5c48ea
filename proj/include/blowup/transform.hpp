#pragma once

#include <memory>
#include <vector>

#include "blowup/model.hpp"
#include "blowup/quadrature.hpp"

namespace blowup::transform {

// Space change to unit dispersion: H(x) = int_c^x |s(z)|^-1 dz, strictly
// increasing.  The frame tabulates H over a working range once; map,
// inverse and drift lookups are then cheap and safe to use from many
// threads.  For dispersions of constant negative sign the driving noise
// flips sign, which is irrelevant in distribution; the pathwise solver
// compensates exactly through `noise_sign`.
class LampertiFrame {
 public:
  LampertiFrame(const DiffusionSpec& spec, double anchor, double x_lo, double x_hi);

  const DiffusionSpec& spec() const { return *spec_; }
  double anchor() const { return anchor_; }
  double noise_sign() const { return sign_; }

  double map(double x) const;        // H(x), increasing
  double inverse(double y) const;    // H^{-1}(y)

  // drift of the unit-dispersion process Y = H(X):
  // nu(y) = sign * (b - s'/2)(H^{-1}(y))
  double unit_drift(double y) const;

  // transformed interval endpoints (may be +-inf when the map diverges)
  double mapped_left() const { return mapped_left_; }
  double mapped_right() const { return mapped_right_; }

  // working range actually covered by the table
  double range_lo() const { return x_lo_; }
  double range_hi() const { return x_hi_; }

 private:
  const DiffusionSpec* spec_;
  double anchor_;
  double sign_;
  double x_lo_, x_hi_;
  double mapped_left_, mapped_right_;
  std::shared_ptr<quad::TabulatedAntiderivative> table_;
};

LampertiFrame make_frame(const DiffusionSpec& spec, double anchor, double x_lo,
                         double x_hi);

// Pathwise solution X(t) = theta_{C(t)}(W(t)) of the diffusion with drift
// b = s'/2 + mu, driven by a discrete Brownian path.  C solves
// C'(t) = mu(X(t)) s(C(t)) with a classical 4th-order one-step scheme.
struct DdsPath {
  std::vector<double> times;
  std::vector<double> x;       // truncated at the exit step
  bool exited = false;
  size_t exit_index = 0;       // first index past the domain, when exited
  double exit_time = 0.0;      // bisected to step * 2^-20
};

// mu must be locally Lipschitz on the working range (probed; refuses
// otherwise).  brownian[i] is W(times[i]); times must be increasing and
// start at 0 with W(0) = 0.
DdsPath dds_path(const LampertiFrame& frame, const std::function<double(double)>& mu,
                 const std::vector<double>& times, const std::vector<double>& brownian,
                 double xi);

// Exponential change-of-measure factors accumulated along a discrete path
// of the driftless companion process.
struct WeightedSample {
  double terminal = 0.0;   // X(T) (last state of the path)
  double weight = 0.0;     // exponential factor, 0 for non-surviving paths
  bool survived = false;
  double int_b_dw = 0.0;   // Ito sum of b dW
  double int_b2_dt = 0.0;  // time integral of b^2
  double int_v_dt = 0.0;   // time integral of the potential V
  bool overflowed = false; // exponent magnitude beyond 700
};

// weight = exp( F(X(T)) - F(xi) - int_0^T V(X(t)) dt ) on survival;
// the time integral uses the trapezoid rule on the path grid.
WeightedSample feynman_kac_weight(const DiffusionSpec& spec,
                                  const std::vector<double>& times,
                                  const std::vector<double>& states, bool survived);

// weight = exp( int b(X) dW - 1/2 int b^2(X) dt ) on survival; the
// stochastic integral uses left-point (Ito) sums of the supplied
// Brownian increments.
WeightedSample girsanov_weight(const DiffusionSpec& spec,
                               const std::vector<double>& times,
                               const std::vector<double>& states,
                               const std::vector<double>& brownian_increments,
                               bool survived);

}  // namespace blowup::transform
