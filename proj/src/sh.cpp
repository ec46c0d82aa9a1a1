#include "gsa/sh.hpp"

namespace gsa {

namespace {
constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};
}  // namespace

void sh_eval(int degree, const Vec3& dir, double* out) {
    require(degree >= 0 && degree <= kMaxShDegree, "sh_eval: degree must be in 0..3");
    double x = dir.x(), y = dir.y(), z = dir.z();
    out[0] = kC0;
    if (degree < 1) return;
    out[1] = -kC1 * y;
    out[2] = kC1 * z;
    out[3] = -kC1 * x;
    if (degree < 2) return;
    double xx = x * x, yy = y * y, zz = z * z;
    double xy = x * y, yz = y * z, xz = x * z;
    out[4] = kC2[0] * xy;
    out[5] = kC2[1] * yz;
    out[6] = kC2[2] * (2.0 * zz - xx - yy);
    out[7] = kC2[3] * xz;
    out[8] = kC2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = kC3[0] * y * (3.0 * xx - yy);
    out[10] = kC3[1] * xy * z;
    out[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    out[14] = kC3[5] * z * (xx - yy);
    out[15] = kC3[6] * x * (xx - 3.0 * yy);
}

void sh_eval_grad(int degree, const Vec3& dir, double* out, Vec3* d_out) {
    sh_eval(degree, dir, out);
    double x = dir.x(), y = dir.y(), z = dir.z();
    d_out[0].setZero();
    if (degree < 1) return;
    d_out[1] = Vec3(0, -kC1, 0);
    d_out[2] = Vec3(0, 0, kC1);
    d_out[3] = Vec3(-kC1, 0, 0);
    if (degree < 2) return;
    double xx = x * x, yy = y * y, zz = z * z;
    d_out[4] = kC2[0] * Vec3(y, x, 0);
    d_out[5] = kC2[1] * Vec3(0, z, y);
    d_out[6] = kC2[2] * Vec3(-2 * x, -2 * y, 4 * z);
    d_out[7] = kC2[3] * Vec3(z, 0, x);
    d_out[8] = kC2[4] * Vec3(2 * x, -2 * y, 0);
    if (degree < 3) return;
    d_out[9] = kC3[0] * Vec3(6 * x * y, 3 * xx - 3 * yy, 0);
    d_out[10] = kC3[1] * Vec3(y * z, x * z, x * y);
    d_out[11] = kC3[2] * Vec3(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
    d_out[12] = kC3[3] * Vec3(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
    d_out[13] = kC3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
    d_out[14] = kC3[5] * Vec3(2 * x * z, -2 * y * z, xx - yy);
    d_out[15] = kC3[6] * Vec3(3 * xx - 3 * yy, -6 * x * y, 0);
}

}  // namespace gsa
