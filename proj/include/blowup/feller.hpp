#pragma once

#include <string>
#include <vector>

#include "blowup/model.hpp"
#include "blowup/quadrature.hpp"

namespace blowup::feller {

enum class Side { left, right };
enum class Classification { explosive, non_explosive, undetermined };
enum class Method { general_integral, prop21_i, prop21_ii, prop21_iii, natural_scale };

struct BoundaryVerdict {
  Side side = Side::left;
  Method method = Method::general_integral;
  Classification classification = Classification::undetermined;
  // estimate of v at the boundary; +inf when flagged divergent, NaN when
  // a shortcut route decided without computing v itself
  double v_limit = std::numeric_limits<double>::quiet_NaN();
  // raw evidence: the ladder points (or probe mesh) and the values seen there
  std::vector<double> evidence_x;
  std::vector<double> evidence_value;
};

struct ExplosionReport {
  BoundaryVerdict left;
  BoundaryVerdict right;
  enum class Overall { no_explosion, explosive, undetermined } overall =
      Overall::undetermined;
  std::string label;
};

const char* to_string(Classification c);
const char* to_string(Method m);
const char* to_string(ExplosionReport::Overall o);

// v(x) = int_c^x exp(2F(z)) s(z)^-2 ( int_z^x exp(-2F(y)) dy ) dz, the
// double integral evaluated with the inner exponent shifted by F(z) so
// rapidly growing antiderivatives cannot overflow.
double feller_v(const DiffusionSpec& spec, double c, double x);

// Evaluates v along the ladder toward one boundary.  Declares the limit
// infinite past a divergence threshold with nondecreasing increments,
// finite once successive values agree to 1e-4 relative, undetermined
// otherwise.  The verdict always carries the raw ladder values.
BoundaryVerdict boundary_limit(const DiffusionSpec& spec, double c, Side side,
                               const TruncationLadder& ladder);

// Full classification; dispatches to the structural shortcuts when the
// drift has one of the recognized special forms, otherwise evaluates the
// test function on both sides.
ExplosionReport classify(const DiffusionSpec& spec, const TruncationLadder& ladder);

// Boundary criteria for driftless diffusions at a finite endpoint:
// divergence of int (r-y)/s^2(y) dy (right) or int (y-l)/s^2(y) dy (left)
// over the shell between ladder level n and the endpoint.
quad::TailVerdict natural_scale_boundary_test(const DiffusionSpec& spec, Side side,
                                              const TruncationLadder& ladder, int n);

}  // namespace blowup::feller
