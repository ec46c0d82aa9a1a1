#pragma once

#include "gsa/common.hpp"

namespace gsa {

constexpr int kMaxShDegree = 3;

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Real SH basis values in standard (l, m) order for a unit direction.
// Degree must be in 0..3. `out` receives (degree+1)^2 values.
void sh_eval(int degree, const Vec3& dir, double* out);

// Basis values plus their derivatives w.r.t. the direction components.
// d_out[b] is d(out[b])/d(dir).
void sh_eval_grad(int degree, const Vec3& dir, double* out, Vec3* d_out);

}  // namespace gsa
