#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>

#include "gsa/cloud.hpp"
#include "gsa/quat.hpp"
#include "gsa/rng.hpp"
#include "gsa/sh.hpp"
#include "gsa/transform.hpp"
#include "test_util.hpp"

using namespace gsa;

namespace {
Quat random_unit_quat(Rng& rng) {
    Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    return q.normalized();
}
}  // namespace

TEST_CASE("quat_rotate basic cases") {
    CHECK(quat_rotate(Quat::identity(), Vec3(1, 2, 3)).isApprox(Vec3(1, 2, 3), 1e-12));

    Quat qz = Quat::from_axis_angle(Vec3(0, 0, M_PI / 2));
    Vec3 r = quat_rotate(qz, Vec3(1, 0, 0));
    CHECK(r.isApprox(Vec3(0, 1, 0), 1e-9));

    Rng rng(7);
    Quat q = random_unit_quat(rng);
    CHECK(quat_rotate(q, Vec3::Zero()).norm() == doctest::Approx(0.0));
    Vec3 v(0.3, -1.2, 0.5);
    CHECK(quat_rotate(q, v).norm() == doctest::Approx(v.norm()).epsilon(1e-6));
}

TEST_CASE("quaternion composition matches matrix composition") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Quat q1 = random_unit_quat(rng), q2 = random_unit_quat(rng);
        Vec3 v(rng.normal(), rng.normal(), rng.normal());
        Vec3 a = quat_rotate(quat_mul(q1, q2), v);
        Vec3 b = quat_rotate(q1, quat_rotate(q2, v));
        CHECK((a - b).norm() < 1e-6);
    }
}

TEST_CASE("quat_from_rotation_matrix analytic and polar cases") {
    CHECK(quat_from_rotation_matrix(Mat3::Identity()).w == doctest::Approx(1.0));

    Mat3 rz = quat_to_matrix(Quat::from_axis_angle(Vec3(0, 0, M_PI / 2)));
    Quat q = quat_from_rotation_matrix(rz);
    double s = q.w > 0 ? 1.0 : -1.0;
    CHECK(s * q.w == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
    CHECK(s * q.z == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
    CHECK(std::abs(q.x) < 1e-12);
    CHECK(std::abs(q.y) < 1e-12);

    // scaled rotation matrix: polar factor strips the scale
    Quat q_scaled = quat_from_rotation_matrix(Mat3(1.02 * rz));
    CHECK(std::abs(quat_dot(q_scaled, q)) == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(quat_from_rotation_matrix(Mat3(-Mat3::Identity())), std::invalid_argument);
}

TEST_CASE("polar factor matches SVD oracle on blended rotations") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        // convex blends of nearby rotations, the shape deform produces
        Mat3 blend = Mat3::Zero();
        double wsum = 0;
        for (int k = 0; k < 3; ++k) {
            double w = rng.uniform(0.1, 1.0);
            Vec3 aa(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
            blend += w * quat_to_matrix(Quat::from_axis_angle(aa));
            wsum += w;
        }
        blend /= wsum;
        Mat3 u = polar_rotation(blend);
        Eigen::JacobiSVD<Mat3> svd(blend, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat3 u_ref = svd.matrixU() * svd.matrixV().transpose();
        CHECK((u - u_ref).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((u * u.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("quat_from_rotation_matrix inverts quat_to_matrix up to sign") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        Quat q = random_unit_quat(rng);
        Quat back = quat_from_rotation_matrix(quat_to_matrix(q));
        CHECK(std::abs(quat_dot(q, back)) == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("covariance_from") {
    CHECK(covariance_from(Vec3::Zero(), Quat::identity()).isApprox(Mat3::Identity(), 1e-12));

    Mat3 c = covariance_from(Vec3(std::log(2.0), 0, 0), Quat::identity());
    CHECK(c(0, 0) == doctest::Approx(4.0));
    CHECK(c(1, 1) == doctest::Approx(1.0));
    CHECK(c(2, 2) == doctest::Approx(1.0));

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Vec3 ls(rng.uniform(-2, 1), rng.uniform(-2, 1), rng.uniform(-2, 1));
        Quat q = random_unit_quat(rng);
        Mat3 cov = covariance_from(ls, q);
        CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-9);
        // PSD: Cholesky succeeds
        Eigen::LLT<Mat3> llt(cov);
        CHECK(llt.info() == Eigen::Success);
    }
}

TEST_CASE("sh_eval analytic values and nesting") {
    double out[16];
    sh_eval(0, Vec3(0.3, -0.5, 0.81).normalized(), out);
    CHECK(out[0] == doctest::Approx(0.2820948).epsilon(1e-6));

    sh_eval(1, Vec3(0, 0, 1), out);
    CHECK(out[1] == doctest::Approx(0.0));
    CHECK(out[2] == doctest::Approx(0.4886025).epsilon(1e-6));
    CHECK(out[3] == doctest::Approx(0.0));

    CHECK(sh_coeff_count(3) == 16);
    CHECK_THROWS(sh_eval(4, Vec3(0, 0, 1), out));

    // lower degrees agree with the prefix of higher degrees
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        d.normalize();
        double full[16], partial[16];
        sh_eval(3, d, full);
        for (int deg = 0; deg < 3; ++deg) {
            sh_eval(deg, d, partial);
            for (int b = 0; b < sh_coeff_count(deg); ++b) CHECK(partial[b] == doctest::Approx(full[b]));
        }
    }
}

TEST_CASE("sh_eval_grad matches finite differences") {
    Rng rng(17);
    Vec3 d(0.3, -0.2, 0.93);
    double out[16];
    Vec3 grads[16];
    sh_eval_grad(3, d, out, grads);  // gradient of the raw polynomial, unnormalized input
    for (int b = 0; b < 16; ++b) {
        for (int c = 0; c < 3; ++c) {
            double fd = test::central_diff(
                [&](double x) {
                    Vec3 dd = d;
                    dd[c] = x;
                    double vals[16];
                    sh_eval(3, dd, vals);
                    return vals[b];
                },
                d[c], 1e-5);
            CHECK(test::close(grads[b][c], fd, 1e-5, 1e-8));
        }
    }
}

TEST_CASE("transform compose/inverse and validity") {
    Rng rng(41);
    Transform a{quat_to_matrix(random_unit_quat(rng)), Vec3(0.2, -0.4, 1.0)};
    Transform b{quat_to_matrix(random_unit_quat(rng)), Vec3(-1.2, 0.3, 0.5)};
    CHECK(a.is_valid());
    Vec3 p(0.5, 0.6, -0.7);
    CHECK((a.compose(b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
    CHECK((a.inverse().apply(a.apply(p)) - p).norm() < 1e-12);

    Affine blend{0.5 * a.R + 0.5 * b.R, Vec3::Zero()};
    Transform rigid = to_rigid(blend);
    CHECK(rigid.is_valid(1e-9));
}

TEST_CASE("GaussianCloud validate catches inconsistencies") {
    GaussianCloud cloud;
    cloud.resize(4, 2);
    CHECK_NOTHROW(cloud.validate());
    cloud.rotations(2, 0) = 3.0;
    CHECK_THROWS(cloud.validate());
}
