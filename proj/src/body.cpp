#include "gsa/body.hpp"

#include <cmath>

#include "gsa/quat.hpp"

namespace gsa {

void BodyModel::validate() const {
    Eigen::Index v = vertex_count(), j = joint_count();
    require(j >= 1, "BodyModel: needs at least one joint");
    require(parents.size() == j, "BodyModel: parents size mismatch");
    require(parents[0] == -1, "BodyModel: joint 0 must be the root");
    require(skinning.rows() == v && skinning.cols() == j, "BodyModel: skinning shape mismatch");
    require(theta_canonical.rows() == j, "BodyModel: theta_canonical shape mismatch");
    // parents precede children, which makes the tree acyclic and rooted at 0
    for (Eigen::Index k = 1; k < j; ++k)
        require(parents[k] >= 0 && parents[k] < k, "BodyModel: joints must be topologically ordered");
    for (Eigen::Index i = 0; i < v; ++i) {
        require(skinning.row(i).minCoeff() >= 0.0, "BodyModel: negative skinning weight");
        require(std::abs(skinning.row(i).sum() - 1.0) < 1e-5,
                "BodyModel: skinning row " + std::to_string(i) + " does not sum to 1");
    }
    for (const auto& sd : shape_dirs)
        require(sd.rows() == v, "BodyModel: shape_dirs vertex count mismatch");
    if (faces.size() > 0)
        require(faces.maxCoeff() < v && faces.minCoeff() >= 0, "BodyModel: face index out of range");
}

void PoseState::wrap_angles() {
    for (Eigen::Index j = 0; j < theta.rows(); ++j) {
        Vec3 aa = theta.row(j);
        double a = aa.norm();
        if (a < M_PI || a == 0.0) continue;
        double wrapped = std::fmod(a + M_PI, 2.0 * M_PI) - M_PI;  // (-pi, pi]
        theta.row(j) = aa * (wrapped / a);
    }
}

MatX3 shaped_template(const BodyModel& model, const VecX& beta) {
    require(beta.size() == model.shape_count(),
            "shaped_template: beta size does not match shape_dirs");
    MatX3 out = model.template_vertices;
    for (int s = 0; s < model.shape_count(); ++s) out += beta[s] * model.shape_dirs[s];
    return out;
}

VecX shaped_template_backward(const BodyModel& model, const MatX3& d_vertices) {
    VecX d_beta(model.shape_count());
    for (int s = 0; s < model.shape_count(); ++s)
        d_beta[s] = (model.shape_dirs[s].array() * d_vertices.array()).sum();
    return d_beta;
}

namespace {

// q(aa) and its 4x3 Jacobian, stable near zero angle.
void axis_angle_quat(const Vec3& aa, Quat& q, Eigen::Matrix<double, 4, 3>* jac) {
    double a2 = aa.squaredNorm();
    double a = std::sqrt(a2);
    double half = 0.5 * a;
    double s, k, w;
    if (a < 1e-8) {
        // Taylor: sin(a/2)/a = 1/2 - a^2/48, cos(a/2) = 1 - a^2/8
        k = 0.5 - a2 / 48.0;
        w = 1.0 - a2 / 8.0;
        s = a * k;
    } else {
        s = std::sin(half);
        k = s / a;
        w = std::cos(half);
    }
    q = Quat(w, k * aa.x(), k * aa.y(), k * aa.z());
    if (!jac) return;
    Eigen::Matrix<double, 4, 3>& J = *jac;
    if (a < 1e-8) {
        // dw/daa = -aa/4 + O(a^3); dv/daa = k I + O(a^2)
        J.row(0) = (-0.25 * aa).transpose();
        J.bottomRows<3>() = k * Mat3::Identity();
    } else {
        Vec3 n = aa / a;
        double dk_da = (0.5 * w - k) / a;
        J.row(0) = (-0.5 * s) * n.transpose();
        J.bottomRows<3>() = k * Mat3::Identity() + dk_da * aa * n.transpose();
    }
}

}  // namespace

Mat3 rotation_from_axis_angle(const Vec3& aa) {
    Quat q;
    axis_angle_quat(aa, q, nullptr);
    return quat_to_matrix(q);
}

Vec3 rotation_from_axis_angle_backward(const Vec3& aa, const Mat3& d_rot) {
    Quat q;
    Eigen::Matrix<double, 4, 3> jac;
    axis_angle_quat(aa, q, &jac);
    Mat3 dR[4];
    quat_to_matrix_jacobian(q, dR);
    Vec4 dq;
    for (int k = 0; k < 4; ++k) dq[k] = (dR[k].array() * d_rot.array()).sum();
    return jac.transpose() * dq;
}

FkResult fk_forward(const BodyModel& model, const MatX3& theta, const Vec3& translation) {
    Eigen::Index j_count = model.joint_count();
    require(theta.rows() == j_count, "fk_forward: theta joint count mismatch");
    FkResult fk;
    fk.theta = theta;
    fk.local.resize(j_count);
    fk.world.resize(j_count);
    fk.rel.resize(j_count);
    for (Eigen::Index j = 0; j < j_count; ++j) {
        Mat3 r = rotation_from_axis_angle(theta.row(j));
        Vec3 off = j == 0 ? Vec3(model.joint_rest.row(0).transpose() + translation)
                          : Vec3(model.joint_rest.row(j) - model.joint_rest.row(model.parents[j]));
        Mat4 local = Mat4::Identity();
        local.topLeftCorner<3, 3>() = r;
        local.topRightCorner<3, 1>() = off;
        fk.local[j] = local;
        fk.world[j] = j == 0 ? local : Mat4(fk.world[model.parents[j]] * local);
        Mat4 inv_bind = Mat4::Identity();
        inv_bind.topRightCorner<3, 1>() = -model.joint_rest.row(j).transpose();
        fk.rel[j] = fk.world[j] * inv_bind;
    }
    return fk;
}

FkGrads fk_backward(const BodyModel& model, const FkResult& fk, const std::vector<Mat4>& d_rel) {
    Eigen::Index j_count = model.joint_count();
    std::vector<Mat4> d_world(j_count, Mat4::Zero());
    for (Eigen::Index j = 0; j < j_count; ++j) {
        Mat4 inv_bind = Mat4::Identity();
        inv_bind.topRightCorner<3, 1>() = -model.joint_rest.row(j).transpose();
        d_world[j] = d_rel[j] * inv_bind.transpose();
    }
    FkGrads g;
    g.d_theta.setZero(j_count, 3);
    g.d_translation.setZero();
    // children run before parents: world[j] = world[parent] * local[j]
    for (Eigen::Index j = j_count - 1; j >= 0; --j) {
        Mat4 d_local;
        if (j == 0) {
            d_local = d_world[0];
        } else {
            Eigen::Index p = model.parents[j];
            d_world[p] += d_world[j] * fk.local[j].transpose();
            d_local = fk.world[p].transpose() * d_world[j];
        }
        g.d_theta.row(j) = rotation_from_axis_angle_backward(fk.theta.row(j),
                                                             d_local.topLeftCorner<3, 3>())
                               .transpose();
        if (j == 0) g.d_translation += d_local.topRightCorner<3, 1>();
    }
    return g;
}

std::vector<Affine> vertex_transforms(const BodyModel& model, const FkResult& fk) {
    Eigen::Index v_count = model.vertex_count();
    Eigen::Index j_count = model.joint_count();
    std::vector<Affine> out(v_count);
    for (Eigen::Index v = 0; v < v_count; ++v) {
        Mat3 a = Mat3::Zero();
        Vec3 b = Vec3::Zero();
        for (Eigen::Index j = 0; j < j_count; ++j) {
            double w = model.skinning(v, j);
            if (w == 0.0) continue;
            a += w * fk.rel[j].topLeftCorner<3, 3>();
            b += w * fk.rel[j].topRightCorner<3, 1>();
        }
        out[v] = {a, b};
    }
    return out;
}

std::vector<Mat4> vertex_transforms_backward(const BodyModel& model, const MatXr& d_vertex_transforms) {
    Eigen::Index j_count = model.joint_count();
    // d_rel[j] = sum_v W[v,j] * dT_v : one GEMM over the 12 affine entries
    MatXr d_rel_flat = model.skinning.transpose() * d_vertex_transforms;  // J x 12
    std::vector<Mat4> d_rel(j_count, Mat4::Zero());
    for (Eigen::Index j = 0; j < j_count; ++j)
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) d_rel[j](r, c) = d_rel_flat(j, r * 4 + c);
    return d_rel;
}

MatX3 posed_vertices(const BodyModel& model, const std::vector<Affine>& vertex_tf, const MatX3& shaped) {
    MatX3 out(model.vertex_count(), 3);
    for (Eigen::Index v = 0; v < model.vertex_count(); ++v)
        out.row(v) = vertex_tf[v].apply(shaped.row(v)).transpose();
    return out;
}

}  // namespace gsa
