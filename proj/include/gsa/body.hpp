#pragma once

#include <vector>

#include "gsa/common.hpp"
#include "gsa/transform.hpp"

namespace gsa {

// Articulated template: rest-pose mesh (rest pose == canonical star pose),
// kinematic tree, linear-blend skinning weights, optional shape blendshapes.
struct BodyModel {
    std::string name;
    MatX3 template_vertices;        // V x 3
    MatXi3 faces;                   // F x 3
    MatX3 joint_rest;               // J x 3
    Eigen::VectorXi parents;        // J, parents[0] == -1
    MatXr skinning;                 // V x J, rows sum to 1
    std::vector<MatX3> shape_dirs;  // S blendshapes, each V x 3
    MatX3 theta_canonical;          // J x 3 axis-angle

    Eigen::Index vertex_count() const { return template_vertices.rows(); }
    Eigen::Index joint_count() const { return joint_rest.rows(); }
    int shape_count() const { return static_cast<int>(shape_dirs.size()); }

    void validate() const;
};

struct PoseState {
    MatX3 theta;       // J x 3 axis-angle
    Vec3 translation = Vec3::Zero();
    VecX beta;         // S

    // Wrap every axis-angle magnitude into [0, pi).
    void wrap_angles();
};

// template + sum_s beta_s * shape_dirs[s]
MatX3 shaped_template(const BodyModel& model, const VecX& beta);
VecX shaped_template_backward(const BodyModel& model, const MatX3& d_vertices);

// Rotation matrix of an axis-angle vector and its reverse-mode adjoint.
Mat3 rotation_from_axis_angle(const Vec3& aa);
Vec3 rotation_from_axis_angle_backward(const Vec3& aa, const Mat3& d_rot);

// Forward kinematics. `rel[j]` maps rest-pose space to posed space
// (identity at the canonical pose); blended per vertex by skinning weights.
struct FkResult {
    MatX3 theta;              // kept for the backward pass
    std::vector<Mat4> local;  // joint-local [R | offset]
    std::vector<Mat4> world;  // accumulated along the tree
    std::vector<Mat4> rel;    // world * inverse_bind (rest -> posed)
};

FkResult fk_forward(const BodyModel& model, const MatX3& theta, const Vec3& translation);

struct FkGrads {
    MatX3 d_theta;
    Vec3 d_translation;
};

// Adjoint of fk_forward given dL/d(rel[j]) as full 4x4 gradients
// (bottom rows ignored).
FkGrads fk_backward(const BodyModel& model, const FkResult& fk, const std::vector<Mat4>& d_rel);

// T_v = sum_j W[v,j] * rel[j], as affine maps.
std::vector<Affine> vertex_transforms(const BodyModel& model, const FkResult& fk);

// dL/d(rel[j]) from per-vertex transform gradients (V x 12, row-major [A|b]).
std::vector<Mat4> vertex_transforms_backward(const BodyModel& model, const MatXr& d_vertex_transforms);

// T_v applied to the shaped template.
MatX3 posed_vertices(const BodyModel& model, const std::vector<Affine>& vertex_tf, const MatX3& shaped);

inline MatX3 posed_vertices(const BodyModel& model, const PoseState& pose) {
    FkResult fk = fk_forward(model, pose.theta, pose.translation);
    return posed_vertices(model, vertex_transforms(model, fk), shaped_template(model, pose.beta));
}

}  // namespace gsa
