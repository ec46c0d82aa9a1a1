#pragma once

#include "gsa/common.hpp"
#include "gsa/quat.hpp"

namespace gsa {

// General affine map p -> A p + b. Blends of rigid transforms land here;
// the rotation is recovered with polar_rotation only where a rotation is
// actually consumed.
struct Affine {
    Mat3 A = Mat3::Identity();
    Vec3 b = Vec3::Zero();

    static Affine identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return A * p + b; }

    Affine compose(const Affine& rhs) const {  // this ∘ rhs
        return {A * rhs.A, A * rhs.b + b};
    }

    Affine inverse() const {
        Mat3 ai = A.inverse();
        return {ai, -(ai * b)};
    }
};

// Rigid transform: orthonormal rotation + translation.
struct Transform {
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();

    static Transform identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return R * p + t; }

    Transform compose(const Transform& rhs) const { return {R * rhs.R, R * rhs.t + t}; }

    Transform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

    Affine as_affine() const { return {R, t}; }

    // |R Rᵀ − I| and det(R) − 1 within tol.
    bool is_valid(double tol = 1e-5) const {
        return (R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < tol &&
               std::abs(R.determinant() - 1.0) < tol;
    }
};

inline Transform to_rigid(const Affine& a) {
    return {polar_rotation(a.A), a.b};
}

}  // namespace gsa
