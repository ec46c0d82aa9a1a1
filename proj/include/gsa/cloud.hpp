#pragma once

#include "gsa/common.hpp"
#include "gsa/quat.hpp"
#include "gsa/sh.hpp"

namespace gsa {

// Canonical Gaussian template. Scales live in log domain and opacities in
// logit domain so every array is unconstrained for the optimizer; exp and
// sigmoid are applied at use sites.
struct GaussianCloud {
    MatX3 positions;       // N x 3
    MatX4 rotations;       // N x 4 unit quaternions (w,x,y,z)
    MatX3 log_scales;      // N x 3
    VecX opacity_logits;   // N
    MatXr sh_coeffs;       // N x (3*B), column 3*b+c for coeff b, channel c
    int sh_degree = kMaxShDegree;

    Eigen::Index size() const { return positions.rows(); }
    int sh_dim() const { return sh_coeff_count(sh_degree); }

    Quat rotation(Eigen::Index i) const {
        return {rotations(i, 0), rotations(i, 1), rotations(i, 2), rotations(i, 3)};
    }

    void resize(Eigen::Index n, int degree) {
        sh_degree = degree;
        positions.setZero(n, 3);
        rotations.setZero(n, 4);
        rotations.col(0).setOnes();
        log_scales.setZero(n, 3);
        opacity_logits.setZero(n);
        sh_coeffs.setZero(n, 3 * sh_coeff_count(degree));
    }

    // Field sizes consistent, rotations unit within 1e-5, scales finite.
    void validate() const;

    // Diagonal of the canonical axis-aligned bounding box.
    double bbox_diagonal() const;
};

// Σ = R S Sᵀ Rᵀ with S = diag(exp(log_scale)).
Mat3 covariance_from(const Vec3& log_scale, const Quat& rotation);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace gsa
