#pragma once

#include <array>
#include <vector>

#include "gsa/binding.hpp"
#include "gsa/body.hpp"
#include "gsa/cloud.hpp"
#include "gsa/mlp.hpp"
#include "gsa/transform.hpp"

namespace gsa {

constexpr int kPolarIters = 5;

// Per-vertex transforms at the canonical pose. Joints do not depend on beta,
// so these are constant across training.
struct CanonicalBody {
    std::vector<Affine> t_c;
    std::vector<Affine> t_c_inv;
};

CanonicalBody build_canonical_body(const BodyModel& model);

// Eq-style agent weights: w_i = exp(-|x - v_i| * |w_nn - w_i| / (2 sigma^2)),
// normalized to sum to 1 over the k neighbours.
VecX agent_weights(const Vec3& x, const Eigen::VectorXi& neighbor_row, int nearest,
                   const MatX3& canonical_vertices, const MatXr& skinning, double sigma);

// Blended rigid transform sum_i w_i * T_c[v_i]^-1 T_t[v_i].
Affine rigid_blend(const VecX& weights, const Eigen::VectorXi& neighbor_row,
                   const std::vector<Affine>& t_c_inv, const std::vector<Affine>& t_t);

// View direction pulled into the canonical SH frame:
// (T_c2w * cam_rot)^T d, then rotated by the inverse of the Gaussian's
// canonical-to-observed rotation.
Vec3 canonical_view_dir(const Vec3& d, const Mat3& cam_rot, const Transform& t_c2w,
                        const Quat& gaussian_rotation);

struct DeformResult {
    MatX3 x_nr;   // positions after the non-rigid offsets
    MatX4 r_nr;   // rotations after the non-rigid offsets (unit)
    MatX3 s_nr;   // log-scales after the non-rigid offsets
    MatX3 x_obs;  // observed positions
    MatX4 q_obs;  // observed rotations (unit)
    std::vector<Affine> blended;  // per-Gaussian D
};

struct DeformCache {
    MatX3 v_shaped;            // template + shape blend
    MatX3 v_canon;             // canonical posed vertices
    MatX3 v_posed;             // target posed vertices
    FkResult fk_t;
    std::vector<Affine> t_t;   // per-vertex target transforms
    std::vector<Affine> m_vert;  // T_c^-1 T_t per vertex

    MatXr mlp_input;
    NonRigidMlp::Cache mlp_cache;
    bool has_mlp = false;

    MatXr u_dist;   // N x k
    MatXr kappa;    // N x k (constant skinning-weight distances)
    MatXr w_raw;    // N x k
    VecX w_sum;     // N

    MatX4 r_nr_raw;
    VecX r_nr_norm;
    MatX4 q_pol;
    MatX4 q_obs_raw;
    VecX q_obs_norm;
    std::vector<std::array<Mat3, kPolarIters + 1>> polar_u;
    std::vector<std::array<Mat3, kPolarIters>> polar_u_inv;
};

struct DeformParams {
    const GaussianCloud* cloud = nullptr;
    const NonRigidMlp* mlp = nullptr;  // null disables the non-rigid field
    const Binding* binding = nullptr;
    const BodyModel* model = nullptr;
    const CanonicalBody* canon = nullptr;
    const MatX3* theta_t = nullptr;
    Vec3 translation = Vec3::Zero();
    const VecX* beta = nullptr;
};

DeformResult deform(const DeformParams& p, DeformCache* cache);

struct DeformGrads {
    MatX3 d_positions;
    MatX4 d_rotations;
    MatX3 d_log_scales;
    NonRigidMlp::Grads d_mlp;
    bool has_mlp = false;
    MatX3 d_theta;
    Vec3 d_translation = Vec3::Zero();
    VecX d_beta;
};

// Reverse pass. d_x_obs/d_q_obs/d_s_nr are the downstream gradients on the
// observed cloud (renderer + priors). Gradients flowing directly into the
// canonical parameters (iso loss on x_c, rot loss on q_c) are the caller's
// to add on top.
DeformGrads deform_backward(const DeformParams& p, const DeformResult& res, const DeformCache& cache,
                            const MatX3& d_x_obs, const MatX4& d_q_obs, const MatX3& d_s_nr);

// Polar factor + quaternion extraction used inside deform; exposed for tests.
Quat quat_from_orthonormal_raw(const Mat3& r);
void quat_from_orthonormal_raw_backward(const Mat3& r, const Vec4& d_q, Mat3& d_r);

}  // namespace gsa
