#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "gsa/deform.hpp"
#include "test_util.hpp"

using namespace gsa;

namespace {

struct DeformFixture {
    BodyModel body;
    CanonicalBody canon;
    GaussianCloud cloud;
    Binding binding;
    NonRigidMlp mlp;
    MatX3 theta;
    Vec3 translation = Vec3::Zero();
    VecX beta;

    DeformParams params(bool with_mlp) {
        DeformParams p;
        p.cloud = &cloud;
        p.mlp = with_mlp ? &mlp : nullptr;
        p.binding = &binding;
        p.model = &body;
        p.canon = &canon;
        p.theta_t = &theta;
        p.translation = translation;
        p.beta = &beta;
        return p;
    }
};

DeformFixture make_fixture(uint64_t seed, Eigen::Index n_gaussians, int mlp_width) {
    DeformFixture f;
    f.body = test::make_chain_body();
    f.canon = build_canonical_body(f.body);
    Rng rng(seed);

    f.cloud.resize(n_gaussians, 1);
    for (Eigen::Index i = 0; i < n_gaussians; ++i) {
        Eigen::Index v = static_cast<Eigen::Index>(rng.uniform_int(static_cast<uint64_t>(f.body.vertex_count())));
        f.cloud.positions.row(i) =
            f.body.template_vertices.row(v) + 0.05 * Vec3(rng.normal(), rng.normal(), rng.normal()).transpose();
        Quat q{1.0 + 0.3 * rng.normal(), 0.3 * rng.normal(), 0.3 * rng.normal(), 0.3 * rng.normal()};
        f.cloud.rotations.row(i) = q.normalized().coeffs().transpose();
        f.cloud.log_scales.row(i) << rng.uniform(-3, -2), rng.uniform(-3, -2), rng.uniform(-3, -2);
        f.cloud.opacity_logits[i] = rng.uniform(0.5, 2.0);
    }

    f.beta = VecX::Zero(2);
    f.beta << 0.15, -0.1;
    MatX3 v_canon = posed_vertices(f.body, f.canon.t_c, shaped_template(f.body, f.beta));
    f.binding = bind(f.cloud.positions, v_canon, 3);

    f.mlp.width = mlp_width;
    f.mlp.depth = 8;
    f.mlp.skip_layer = 4;
    f.mlp.n_freq = 6;
    f.mlp.init(rng);
    auto randomize = [&](MatXr& w, double s) {
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = s * rng.normal();
    };
    randomize(f.mlp.head_dx_w, 0.03);
    randomize(f.mlp.head_dr_w, 0.03);
    randomize(f.mlp.head_ds_w, 0.03);

    f.theta = test::random_theta(f.body, rng, 0.35);
    f.translation = Vec3(0.04, -0.06, 0.08);
    return f;
}

}  // namespace

TEST_CASE("agent_weights: nearest term, scalar oracle, normalization, convexity") {
    // two vertices with controlled distances and skinning rows
    MatX3 verts(2, 3);
    verts << 0, 0, 0, 0.1, 0, 0;
    MatXr skin(2, 2);
    skin << 1, 0, 0.9292893218813453, 0.07071067811865475;  // |w0-w1| = 0.1
    Vec3 x(0, 0, 0);  // on vertex 0
    Eigen::VectorXi nb(2);
    nb << 0, 1;

    VecX w = agent_weights(x, nb, 0, verts, skin, 0.1);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
    // unnormalized: w0 = exp(0) = 1 (zero skinning distance to itself)
    // w1 = exp(-0.1*0.1/(2*0.01)) = exp(-0.5)
    double expect1 = std::exp(-0.5);
    CHECK(w[0] == doctest::Approx(1.0 / (1.0 + expect1)).epsilon(1e-9));
    CHECK(w[1] == doctest::Approx(expect1 / (1.0 + expect1)).epsilon(1e-9));

    // random clouds are convex combinations that match a scalar re-evaluation
    Rng rng(3);
    MatX3 rv(20, 3);
    for (Eigen::Index i = 0; i < rv.size(); ++i) rv.data()[i] = rng.uniform(-1, 1);
    MatXr rw(20, 4);
    for (Eigen::Index i = 0; i < 20; ++i) {
        Vec4 row(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform());
        rw.row(i) = (row / row.sum()).transpose();
    }
    Binding b = bind(rv.topRows(5), rv, 3);
    for (Eigen::Index i = 0; i < 5; ++i) {
        VecX ww = agent_weights(rv.row(i), b.neighbors.row(i), b.nearest[i], rv, rw, 0.1);
        CHECK(ww.minCoeff() >= 0.0);
        CHECK(ww.sum() == doctest::Approx(1.0).epsilon(1e-9));
        double raw_sum = 0.0;
        VecX raw(3);
        for (int k = 0; k < 3; ++k) {
            int v = b.neighbors(i, k);
            double u = (rv.row(v) - rv.row(i)).norm();
            double kap = (rw.row(b.nearest[i]) - rw.row(v)).norm();
            raw[k] = std::exp(-u * kap / 0.02);
            raw_sum += raw[k];
        }
        for (int k = 0; k < 3; ++k) CHECK(ww[k] == doctest::Approx(raw[k] / raw_sum).epsilon(1e-12));
    }
}

TEST_CASE("rigid_blend: equal poses give identity, k=1 exact, dense oracle") {
    DeformFixture f = make_fixture(51, 4, 8);

    // equal poses
    FkResult fk_c = fk_forward(f.body, f.body.theta_canonical, Vec3::Zero());
    auto t_same = vertex_transforms(f.body, fk_c);
    VecX w3(3);
    w3 << 0.5, 0.3, 0.2;
    Eigen::VectorXi nb = f.binding.neighbors.row(0).transpose();
    Affine d_same = rigid_blend(w3, nb, f.canon.t_c_inv, t_same);
    CHECK((d_same.A - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(d_same.b.norm() < 1e-6);

    // target pose
    FkResult fk_t = fk_forward(f.body, f.theta, f.translation);
    auto t_t = vertex_transforms(f.body, fk_t);

    VecX w1(1);
    w1 << 1.0;
    Eigen::VectorXi nb1(1);
    nb1 << nb[0];
    Affine d1 = rigid_blend(w1, nb1, f.canon.t_c_inv, t_t);
    Affine expect1 = f.canon.t_c_inv[static_cast<size_t>(nb[0])].compose(t_t[static_cast<size_t>(nb[0])]);
    CHECK((d1.A - expect1.A).cwiseAbs().maxCoeff() < 1e-12);

    // dense matrix oracle for k=3
    Affine d3 = rigid_blend(w3, nb, f.canon.t_c_inv, t_t);
    Mat4 acc = Mat4::Zero();
    for (int k = 0; k < 3; ++k) {
        const Affine& ci = f.canon.t_c_inv[static_cast<size_t>(nb[k])];
        const Affine& tt = t_t[static_cast<size_t>(nb[k])];
        Mat4 mc = Mat4::Identity(), mt = Mat4::Identity();
        mc.topLeftCorner<3, 3>() = ci.A;
        mc.topRightCorner<3, 1>() = ci.b;
        mt.topLeftCorner<3, 3>() = tt.A;
        mt.topRightCorner<3, 1>() = tt.b;
        acc += w3[k] * mc * mt;
    }
    CHECK((d3.A - acc.topLeftCorner<3, 3>()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((d3.b - acc.topRightCorner<3, 1>()).norm() < 1e-9);
}

TEST_CASE("identity pipeline: canonical pose with zero offsets is the identity map") {
    DeformFixture f = make_fixture(57, 6, 8);
    f.theta = f.body.theta_canonical;
    f.translation.setZero();
    DeformResult res = deform(f.params(false), nullptr);
    CHECK((res.x_obs - f.cloud.positions).cwiseAbs().maxCoeff() < 1e-6);
    for (Eigen::Index i = 0; i < f.cloud.size(); ++i) {
        Quat a = f.cloud.rotation(i);
        Quat b{res.q_obs(i, 0), res.q_obs(i, 1), res.q_obs(i, 2), res.q_obs(i, 3)};
        CHECK(std::abs(quat_dot(a, b)) == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK((res.s_nr - f.cloud.log_scales).cwiseAbs().maxCoeff() < 1e-12);

    // zero-head MLP gives the same result
    DeformResult res2 = deform(f.params(true), nullptr);
    for (auto& w : {&f.mlp.head_dx_w, &f.mlp.head_dr_w, &f.mlp.head_ds_w}) (void)w;
}

TEST_CASE("zero-head MLP leaves the pipeline identical to no MLP") {
    DeformFixture f = make_fixture(61, 5, 8);
    f.mlp.head_dx_w.setZero();
    f.mlp.head_dr_w.setZero();
    f.mlp.head_ds_w.setZero();
    DeformResult a = deform(f.params(false), nullptr);
    DeformResult b = deform(f.params(true), nullptr);
    CHECK((a.x_obs - b.x_obs).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.s_nr - b.s_nr).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("global rigid motion on the root preserves pairwise distances") {
    DeformFixture f = make_fixture(63, 8, 8);
    f.theta = MatX3::Zero(3, 3);
    f.theta.row(0) << 0.3, 0.9, -0.4;  // pure root rotation
    f.translation = Vec3(0.2, -0.1, 0.5);
    DeformResult res = deform(f.params(false), nullptr);

    Mat3 r = rotation_from_axis_angle(f.theta.row(0));
    Vec3 root = f.body.joint_rest.row(0);
    for (Eigen::Index i = 0; i < f.cloud.size(); ++i) {
        Vec3 expect = r * (Vec3(f.cloud.positions.row(i)) - root) + root + f.translation;
        CHECK((Vec3(res.x_obs.row(i)) - expect).norm() < 1e-6);
    }
    for (Eigen::Index i = 0; i < f.cloud.size(); ++i)
        for (Eigen::Index j = i + 1; j < f.cloud.size(); ++j) {
            double dc = (f.cloud.positions.row(i) - f.cloud.positions.row(j)).norm();
            double dob = (res.x_obs.row(i) - res.x_obs.row(j)).norm();
            CHECK(std::abs(dc - dob) < 1e-6);
        }
}

TEST_CASE("blended transform reproduces the observed position") {
    DeformFixture f = make_fixture(67, 6, 8);
    DeformResult res = deform(f.params(true), nullptr);
    for (Eigen::Index i = 0; i < f.cloud.size(); ++i) {
        Vec3 via_d = res.blended[static_cast<size_t>(i)].apply(res.x_nr.row(i));
        CHECK((via_d - Vec3(res.x_obs.row(i))).norm() < 1e-6);
    }
}

TEST_CASE("bent joint: k=3 blend stays within the single-nearest-vertex envelope") {
    DeformFixture f = make_fixture(71, 10, 8);
    f.theta = MatX3::Zero(3, 3);
    f.theta(2, 2) = M_PI / 3;  // bend the last joint
    f.translation.setZero();
    DeformResult res = deform(f.params(false), nullptr);

    FkResult fk_t = fk_forward(f.body, f.theta, f.translation);
    auto t_t = vertex_transforms(f.body, fk_t);
    for (Eigen::Index i = 0; i < f.cloud.size(); ++i) {
        // k=1 oracle: follow the agent vertex only
        int nn = f.binding.nearest[i];
        Affine m_nn = f.canon.t_c_inv[static_cast<size_t>(nn)].compose(t_t[static_cast<size_t>(nn)]);
        Vec3 oracle = m_nn.apply(f.cloud.positions.row(i));
        // max deviation of any neighbour transform from the agent's
        double bound = 0.0;
        for (int k = 0; k < f.binding.k(); ++k) {
            int v = f.binding.neighbors(i, k);
            Affine m = f.canon.t_c_inv[static_cast<size_t>(v)].compose(t_t[static_cast<size_t>(v)]);
            bound = std::max(bound, (m.apply(f.cloud.positions.row(i)) - oracle).norm());
        }
        CHECK((Vec3(res.x_obs.row(i)) - oracle).norm() <= bound + 1e-9);
    }
}

TEST_CASE("canonical_view_dir") {
    CHECK(canonical_view_dir(Vec3(0.2, 0.5, 0.84), Mat3::Identity(), Transform::identity(),
                             Quat::identity())
              .isApprox(Vec3(0.2, 0.5, 0.84), 1e-12));

    Mat3 rz = quat_to_matrix(Quat::from_axis_angle(Vec3(0, 0, M_PI / 2)));
    Vec3 d = canonical_view_dir(Vec3(1, 0, 0), rz, Transform::identity(), Quat::identity());
    CHECK(d.isApprox(Vec3(0, -1, 0), 1e-9));

    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Vec3 dir(rng.normal(), rng.normal(), rng.normal());
        dir.normalize();
        Quat qg{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        qg = qg.normalized();
        Transform t{quat_to_matrix(qg), Vec3(1, 2, 3)};
        Mat3 rc = quat_to_matrix(Quat::from_axis_angle(Vec3(0.3, -0.4, 0.2)));
        CHECK(canonical_view_dir(dir, rc, t, qg).norm() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("polar quaternion extraction backward matches finite differences") {
    Rng rng(73);
    Mat3 blend = Mat3::Zero();
    for (int k = 0; k < 3; ++k)
        blend += 0.33 * quat_to_matrix(Quat::from_axis_angle(
                            Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))));
    Vec4 coef(rng.normal(), rng.normal(), rng.normal(), rng.normal());

    auto loss = [&](const Mat3& m) {
        Mat3 u = polar_rotation(m);
        Quat q = quat_from_orthonormal_raw(u);
        return coef.dot(q.coeffs());
    };

    // analytic: shepperd backward then the Newton-iteration reverse
    Mat3 u = blend;
    std::array<Mat3, kPolarIters + 1> iters;
    std::array<Mat3, kPolarIters> invs;
    iters[0] = u;
    for (int it = 0; it < kPolarIters; ++it) {
        invs[static_cast<size_t>(it)] = iters[static_cast<size_t>(it)].inverse();
        iters[static_cast<size_t>(it + 1)] =
            0.5 * (iters[static_cast<size_t>(it)] + invs[static_cast<size_t>(it)].transpose());
    }
    Mat3 d_u = Mat3::Zero();
    quat_from_orthonormal_raw_backward(iters[kPolarIters], coef, d_u);
    for (int it = kPolarIters - 1; it >= 0; --it) {
        const Mat3& inv = invs[static_cast<size_t>(it)];
        d_u = 0.5 * d_u - 0.5 * (inv.transpose() * d_u.transpose() * inv.transpose());
    }

    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double fd = test::central_diff(
                [&](double v) {
                    Mat3 m = blend;
                    m(r, c) = v;
                    return loss(m);
                },
                blend(r, c), 1e-5);
            CHECK(test::close(d_u(r, c), fd, 1e-4, 1e-8));
        }
}

TEST_CASE("deform_backward matches finite differences end to end") {
    // seed chosen so no ReLU kink sits inside the FD step
    DeformFixture f = make_fixture(80, 6, 8);
    Eigen::Index n = f.cloud.size();

    Rng rng(101);
    MatX3 cx(n, 3), cs(n, 3);
    MatX4 cq(n, 4);
    for (Eigen::Index i = 0; i < cx.size(); ++i) cx.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < cq.size(); ++i) cq.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < cs.size(); ++i) cs.data()[i] = rng.normal();

    auto loss = [&]() {
        DeformResult res = deform(f.params(true), nullptr);
        return (cx.array() * res.x_obs.array()).sum() + (cq.array() * res.q_obs.array()).sum() +
               (cs.array() * res.s_nr.array()).sum();
    };

    DeformCache cache;
    DeformResult res = deform(f.params(true), &cache);
    DeformGrads g = deform_backward(f.params(true), res, cache, cx, cq, cs);

    SUBCASE("cloud positions") {
        auto stats = test::check_gradient(
            f.cloud.positions.size(), [&](Eigen::Index i) { return f.cloud.positions.data()[i]; },
            [&](Eigen::Index i, double v) { f.cloud.positions.data()[i] = v; }, loss,
            [&](Eigen::Index i) { return g.d_positions.data()[i]; });
        INFO("failed ", stats.failed, " worst ", stats.worst_analytic, " vs ", stats.worst_fd);
        CHECK(stats.failed == 0);
    }
    SUBCASE("cloud rotations") {
        auto stats = test::check_gradient(
            f.cloud.rotations.size(), [&](Eigen::Index i) { return f.cloud.rotations.data()[i]; },
            [&](Eigen::Index i, double v) { f.cloud.rotations.data()[i] = v; }, loss,
            [&](Eigen::Index i) { return g.d_rotations.data()[i]; });
        INFO("failed ", stats.failed, " worst ", stats.worst_analytic, " vs ", stats.worst_fd);
        CHECK(stats.failed == 0);
    }
    SUBCASE("cloud log scales") {
        auto stats = test::check_gradient(
            f.cloud.log_scales.size(), [&](Eigen::Index i) { return f.cloud.log_scales.data()[i]; },
            [&](Eigen::Index i, double v) { f.cloud.log_scales.data()[i] = v; }, loss,
            [&](Eigen::Index i) { return g.d_log_scales.data()[i]; });
        CHECK(stats.failed == 0);
    }
    SUBCASE("mlp weights") {
        VecX flat, gflat;
        f.mlp.to_flat(flat);
        NonRigidMlp::grads_to_flat(g.d_mlp, gflat);
        auto stats = test::check_gradient(
            flat.size(), [&](Eigen::Index i) { return flat[i]; },
            [&](Eigen::Index i, double v) {
                flat[i] = v;
                f.mlp.from_flat(flat);
            },
            loss, [&](Eigen::Index i) { return gflat[i]; });
        INFO("failed ", stats.failed, "/", stats.checked, " worst idx ", stats.worst_index,
             " analytic ", stats.worst_analytic, " fd ", stats.worst_fd);
        CHECK(stats.failed == 0);
    }
    SUBCASE("theta, translation, beta") {
        auto stats_t = test::check_gradient(
            f.theta.size(), [&](Eigen::Index i) { return f.theta.data()[i]; },
            [&](Eigen::Index i, double v) { f.theta.data()[i] = v; }, loss,
            [&](Eigen::Index i) { return g.d_theta.data()[i]; });
        INFO("theta failed ", stats_t.failed, " worst ", stats_t.worst_analytic, " vs ",
             stats_t.worst_fd);
        CHECK(stats_t.failed == 0);

        auto stats_tr = test::check_gradient(
            3, [&](Eigen::Index i) { return f.translation[i]; },
            [&](Eigen::Index i, double v) { f.translation[i] = v; }, loss,
            [&](Eigen::Index i) { return g.d_translation[i]; });
        CHECK(stats_tr.failed == 0);

        auto stats_b = test::check_gradient(
            f.beta.size(), [&](Eigen::Index i) { return f.beta[i]; },
            [&](Eigen::Index i, double v) { f.beta[i] = v; }, loss,
            [&](Eigen::Index i) { return g.d_beta[i]; });
        INFO("beta failed ", stats_b.failed, " worst ", stats_b.worst_analytic, " vs ",
             stats_b.worst_fd);
        CHECK(stats_b.failed == 0);
    }
}
