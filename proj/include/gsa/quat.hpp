#pragma once

#include "gsa/common.hpp"

namespace gsa {

// Unit quaternion (w, x, y, z). Storage matches the checkpoint/PLY layout
// rot_0..rot_3 = w,x,y,z.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    Quat() = default;
    Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    static Quat identity() { return {}; }
    static Quat from_axis_angle(const Vec3& axis_angle);

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    Quat normalized() const;
    Quat conjugate() const { return {w, -x, -y, -z}; }
    Quat operator-() const { return {-w, -x, -y, -z}; }

    Vec4 coeffs() const { return {w, x, y, z}; }
    static Quat from_coeffs(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }
};

Quat quat_mul(const Quat& a, const Quat& b);
double quat_dot(const Quat& a, const Quat& b);

// Adjoint of the Hamilton product: accumulates dL/da and dL/db given
// dL/d(a*b).
void quat_mul_backward(const Quat& a, const Quat& b, const Vec4& d_out, Vec4& d_a, Vec4& d_b);

// R(q)·v for unit q; q is normalized defensively.
Vec3 quat_rotate(const Quat& q, const Vec3& v);

// Rotation matrix of a unit quaternion.
Mat3 quat_to_matrix(const Quat& q);

// Partial derivatives dR/dw, dR/dx, dR/dy, dR/dz at a unit quaternion
// (derivatives of the quadratic form; the caller owns the normalization
// projection if q came from an unnormalized parameter).
void quat_to_matrix_jacobian(const Quat& q, Mat3 dR[4]);

// Orthogonal polar factor of a matrix with positive determinant.
// Fixed-count Newton iteration U <- (U + U^-T)/2; near-rotation inputs
// (blends of rigid transforms) converge to machine precision.
Mat3 polar_rotation(const Mat3& m, int iters = 5);

// Unit quaternion of the closest rotation to m (polar factor).
// Throws std::invalid_argument if det(m) <= 0.
Quat quat_from_rotation_matrix(const Mat3& m);

// Shepperd extraction from an orthonormal rotation matrix.
Quat quat_from_orthonormal(const Mat3& r);

// Gradient projection through q = q_raw / |q_raw| evaluated at unit q:
// maps dL/dq(unit) to dL/dq_raw for a raw vector of norm `raw_norm`.
Vec4 normalize_backward(const Quat& q_unit, double raw_norm, const Vec4& dq_unit);

}  // namespace gsa
