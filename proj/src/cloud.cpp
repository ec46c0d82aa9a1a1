#include "gsa/cloud.hpp"

namespace gsa {

void GaussianCloud::validate() const {
    Eigen::Index n = positions.rows();
    require(rotations.rows() == n && log_scales.rows() == n && opacity_logits.size() == n &&
                sh_coeffs.rows() == n,
            "GaussianCloud: inconsistent field sizes");
    require(sh_coeffs.cols() == 3 * sh_dim(), "GaussianCloud: SH column count mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
        require(std::abs(rotations.row(i).norm() - 1.0) < 1e-5,
                "GaussianCloud: rotation " + std::to_string(i) + " not unit norm");
    }
    require(positions.allFinite() && log_scales.allFinite() && opacity_logits.allFinite() &&
                sh_coeffs.allFinite(),
            "GaussianCloud: non-finite values");
}

double GaussianCloud::bbox_diagonal() const {
    if (positions.rows() == 0) return 0.0;
    Vec3 lo = positions.colwise().minCoeff();
    Vec3 hi = positions.colwise().maxCoeff();
    return (hi - lo).norm();
}

Mat3 covariance_from(const Vec3& log_scale, const Quat& rotation) {
    Mat3 r = quat_to_matrix(rotation.normalized());
    Mat3 m = r * log_scale.array().exp().matrix().asDiagonal();
    return m * m.transpose();
}

}  // namespace gsa
