#include "gsa/quat.hpp"

#include <cmath>

namespace gsa {

Quat Quat::from_axis_angle(const Vec3& aa) {
    double angle = aa.norm();
    if (angle < 1e-12) return identity();
    double half = 0.5 * angle;
    double s = std::sin(half) / angle;
    return {std::cos(half), aa.x() * s, aa.y() * s, aa.z() * s};
}

Quat Quat::normalized() const {
    double n = norm();
    require(n > 1e-300, "cannot normalize zero quaternion");
    return {w / n, x / n, y / n, z / n};
}

Quat quat_mul(const Quat& a, const Quat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

double quat_dot(const Quat& a, const Quat& b) {
    return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

Vec3 quat_rotate(const Quat& q_in, const Vec3& v) {
    Quat q = q_in.normalized();
    // v + 2 u x (u x v + w v), u = (x,y,z)
    Vec3 u(q.x, q.y, q.z);
    Vec3 t = 2.0 * u.cross(v);
    return v + q.w * t + u.cross(t);
}

Mat3 quat_to_matrix(const Quat& q) {
    double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

void quat_to_matrix_jacobian(const Quat& q, Mat3 dR[4]) {
    double w = q.w, x = q.x, y = q.y, z = q.z;
    dR[0] << 0, -2 * z, 2 * y,
             2 * z, 0, -2 * x,
             -2 * y, 2 * x, 0;
    dR[1] << 0, 2 * y, 2 * z,
             2 * y, -4 * x, -2 * w,
             2 * z, 2 * w, -4 * x;
    dR[2] << -4 * y, 2 * x, 2 * w,
             2 * x, 0, 2 * z,
             -2 * w, 2 * z, -4 * y;
    dR[3] << -4 * z, -2 * w, 2 * x,
             2 * w, -4 * z, 2 * y,
             2 * x, 2 * y, 0;
}

Mat3 polar_rotation(const Mat3& m, int iters) {
    Mat3 u = m;
    for (int i = 0; i < iters; ++i) u = 0.5 * (u + u.inverse().transpose());
    return u;
}

Quat quat_from_orthonormal(const Mat3& r) {
    double t = r.trace();
    Quat q;
    if (t > 0.0) {
        double s = std::sqrt(t + 1.0) * 2.0;
        q.w = 0.25 * s;
        q.x = (r(2, 1) - r(1, 2)) / s;
        q.y = (r(0, 2) - r(2, 0)) / s;
        q.z = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q.w = (r(2, 1) - r(1, 2)) / s;
        q.x = 0.25 * s;
        q.y = (r(0, 1) + r(1, 0)) / s;
        q.z = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q.w = (r(0, 2) - r(2, 0)) / s;
        q.x = (r(0, 1) + r(1, 0)) / s;
        q.y = 0.25 * s;
        q.z = (r(1, 2) + r(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q.w = (r(1, 0) - r(0, 1)) / s;
        q.x = (r(0, 2) + r(2, 0)) / s;
        q.y = (r(1, 2) + r(2, 1)) / s;
        q.z = 0.25 * s;
    }
    return q.normalized();
}

Quat quat_from_rotation_matrix(const Mat3& m) {
    if (m.determinant() <= 0.0)
        throw std::invalid_argument("quat_from_rotation_matrix: non-positive determinant");
    return quat_from_orthonormal(polar_rotation(m));
}

void quat_mul_backward(const Quat& a, const Quat& b, const Vec4& d, Vec4& d_a, Vec4& d_b) {
    double dw = d[0], dx = d[1], dy = d[2], dz = d[3];
    d_a[0] += dw * b.w + dx * b.x + dy * b.y + dz * b.z;
    d_a[1] += -dw * b.x + dx * b.w - dy * b.z + dz * b.y;
    d_a[2] += -dw * b.y + dx * b.z + dy * b.w - dz * b.x;
    d_a[3] += -dw * b.z - dx * b.y + dy * b.x + dz * b.w;
    d_b[0] += dw * a.w + dx * a.x + dy * a.y + dz * a.z;
    d_b[1] += -dw * a.x + dx * a.w + dy * a.z - dz * a.y;
    d_b[2] += -dw * a.y - dx * a.z + dy * a.w + dz * a.x;
    d_b[3] += -dw * a.z + dx * a.y - dy * a.x + dz * a.w;
}

Vec4 normalize_backward(const Quat& q_unit, double raw_norm, const Vec4& dq_unit) {
    Vec4 q = q_unit.coeffs();
    return (dq_unit - q * q.dot(dq_unit)) / raw_norm;
}

}  // namespace gsa
