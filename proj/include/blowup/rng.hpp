#pragma once

#include <cstdint>

namespace blowup::rng {

// Counter-based generator: every draw is a pure function of
// (seed, path, step, lane), so path ensembles are reproducible no
// matter how work is scheduled across threads.  The core is the
// Philox-4x32-10 bijection.
struct Draw {
  uint64_t a;
  uint64_t b;
};

Draw philox(uint64_t seed, uint64_t path, uint64_t step, uint32_t lane = 0);

// Uniform in the open interval (0,1).
double to_uniform(uint64_t bits);

// Inverse of the standard normal distribution function (Wichura's
// AS 241, double precision; relative error below 1e-15 on (0,1)).
double inverse_normal_cdf(double p);

inline double uniform(uint64_t seed, uint64_t path, uint64_t step, uint32_t lane = 0) {
  return to_uniform(philox(seed, path, step, lane).a);
}

inline double standard_normal(uint64_t seed, uint64_t path, uint64_t step, uint32_t lane = 0) {
  return inverse_normal_cdf(uniform(seed, path, step, lane));
}

}  // namespace blowup::rng
