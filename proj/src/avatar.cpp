#include "gsa/avatar.hpp"

namespace gsa {

AvatarModel AvatarModel::from_checkpoint(const Checkpoint& ckpt) {
    AvatarModel m;
    m.body = ckpt.body();
    m.cloud = ckpt.cloud;
    m.mlp = ckpt.mlp;
    m.use_mlp = true;
    m.beta = ckpt.beta;
    m.prepare();
    return m;
}

void AvatarModel::prepare(int binding_k) {
    canon = build_canonical_body(body);
    MatX3 v_canon = posed_vertices(body, canon.t_c, shaped_template(body, beta));
    binding = bind(cloud.positions, v_canon, binding_k);
}

DeformResult AvatarModel::pose(const MatX3& theta, const Vec3& translation, DeformCache* cache) const {
    DeformParams p;
    p.cloud = &cloud;
    p.mlp = use_mlp ? &mlp : nullptr;
    p.binding = &binding;
    p.model = &body;
    p.canon = &canon;
    p.theta_t = &theta;
    p.translation = translation;
    p.beta = &beta;
    return deform(p, cache);
}

Image AvatarModel::render_pose(const MatX3& theta, const Vec3& translation, const Camera& camera,
                               const Vec3& background) const {
    DeformResult d = pose(theta, translation);
    // canonical rotations are stored unit; normalize defensively for SH frames
    MatX4 q_can = cloud.rotations;
    for (Eigen::Index i = 0; i < q_can.rows(); ++i) q_can.row(i) /= q_can.row(i).norm();
    RenderInput in;
    in.positions = &d.x_obs;
    in.rotations = &d.q_obs;
    in.rotations_canonical = &q_can;
    in.log_scales = &d.s_nr;
    in.opacity_logits = &cloud.opacity_logits;
    in.sh_coeffs = &cloud.sh_coeffs;
    in.sh_degree = cloud.sh_degree;
    RenderOptions opts;
    opts.background = background;
    return render(in, camera, opts).image;
}

}  // namespace gsa
