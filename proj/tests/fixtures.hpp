#pragma once

#include "gsa/body.hpp"
#include "gsa/rng.hpp"

namespace gsa::test {

// Three-joint chain with a ring of vertices around each bone; small enough
// for exhaustive finite differences.
inline BodyModel make_chain_body(int verts_per_joint = 4, int shape_count = 2) {
    BodyModel m;
    m.name = "test-chain";
    m.joint_rest.resize(3, 3);
    m.joint_rest << 0, 0, 0,
                    0, 0.5, 0,
                    0, 1.0, 0;
    m.parents.resize(3);
    m.parents << -1, 0, 1;

    Eigen::Index v_count = 3 * verts_per_joint;
    m.template_vertices.resize(v_count, 3);
    m.skinning = MatXr::Zero(v_count, 3);
    Rng rng(99);
    for (int j = 0; j < 3; ++j) {
        for (int k = 0; k < verts_per_joint; ++k) {
            Eigen::Index v = j * verts_per_joint + k;
            double a = 2.0 * M_PI * k / verts_per_joint;
            m.template_vertices.row(v) << 0.15 * std::cos(a), m.joint_rest(j, 1) + 0.25,
                0.15 * std::sin(a);
            // soft assignment biased to the ring's joint
            Vec3 w(0.1 + rng.uniform(), 0.1 + rng.uniform(), 0.1 + rng.uniform());
            w[j] += 2.0;
            w /= w.sum();
            m.skinning.row(v) = w.transpose();
        }
    }
    for (int s = 0; s < shape_count; ++s) {
        MatX3 dir(v_count, 3);
        for (Eigen::Index v = 0; v < v_count; ++v)
            dir.row(v) << 0.1 * rng.normal(), 0.1 * rng.normal(), 0.1 * rng.normal();
        m.shape_dirs.push_back(dir);
    }
    m.theta_canonical = MatX3::Zero(3, 3);
    m.faces.resize(0, 3);
    m.validate();
    return m;
}

inline MatX3 random_theta(const BodyModel& model, Rng& rng, double amp = 0.4) {
    MatX3 theta(model.joint_count(), 3);
    for (Eigen::Index j = 0; j < theta.rows(); ++j)
        theta.row(j) << rng.uniform(-amp, amp), rng.uniform(-amp, amp), rng.uniform(-amp, amp);
    return theta;
}

}  // namespace gsa::test
