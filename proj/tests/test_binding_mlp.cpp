#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "gsa/binding.hpp"
#include "gsa/mlp.hpp"
#include "gsa/rng.hpp"
#include "test_util.hpp"

using namespace gsa;

TEST_CASE("bind: coincident point, k=1 degenerate, brute-force oracle") {
    Rng rng(13);
    MatX3 verts(50, 3);
    for (Eigen::Index i = 0; i < verts.size(); ++i) verts.data()[i] = rng.uniform(-1, 1);

    MatX3 query(10, 3);
    for (Eigen::Index i = 0; i < query.size(); ++i) query.data()[i] = rng.uniform(-1, 1);
    query.row(3) = verts.row(7);  // exactly on a vertex

    Binding b1 = bind(query, verts, 1);
    CHECK(b1.nearest[3] == 7);
    for (Eigen::Index i = 0; i < 10; ++i) CHECK(b1.neighbors(i, 0) == b1.nearest[i]);

    Binding b4 = bind(query, verts, 4);
    for (Eigen::Index i = 0; i < 10; ++i) {
        // O(NV) scan oracle with (distance, index) ordering
        std::vector<std::pair<double, int>> all;
        for (Eigen::Index v = 0; v < 50; ++v)
            all.push_back({(verts.row(v) - query.row(i)).squaredNorm(), static_cast<int>(v)});
        std::sort(all.begin(), all.end());
        CHECK(b4.nearest[i] == all[0].second);
        for (int k = 0; k < 4; ++k) CHECK(b4.neighbors(i, k) == all[static_cast<size_t>(k)].second);
    }

    CHECK_THROWS(bind(query, verts, 51));
}

TEST_CASE("bind is idempotent on an unchanged cloud") {
    Rng rng(17);
    MatX3 verts(30, 3), query(12, 3);
    for (Eigen::Index i = 0; i < verts.size(); ++i) verts.data()[i] = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < query.size(); ++i) query.data()[i] = rng.uniform(-1, 1);
    Binding a = bind(query, verts, 3);
    Binding b = bind(query, verts, 3);
    CHECK(a.nearest == b.nearest);
    CHECK(a.neighbors == b.neighbors);
}

TEST_CASE("bind breaks exact ties by lower vertex index") {
    MatX3 verts(4, 3);
    verts << 1, 0, 0,
             -1, 0, 0,
             0, 1, 0,
             0, -1, 0;  // all at distance 1 from origin
    MatX3 query(1, 3);
    query.setZero();
    Binding b = bind(query, verts, 3);
    CHECK(b.nearest[0] == 0);
    CHECK(b.neighbors(0, 0) == 0);
    CHECK(b.neighbors(0, 1) == 1);
    CHECK(b.neighbors(0, 2) == 2);
}

namespace {
NonRigidMlp small_mlp(Rng& rng, int width = 16) {
    NonRigidMlp mlp;
    mlp.width = width;
    mlp.depth = 8;
    mlp.skip_layer = 4;
    mlp.n_freq = 6;
    mlp.init(rng);
    return mlp;
}

MatXr random_input(const NonRigidMlp& mlp, Rng& rng, Eigen::Index n) {
    MatXr x(n, mlp.input_dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        Vec3 v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        posenc(p, mlp.n_freq, x.row(i).data());
        posenc(v, mlp.n_freq, x.row(i).data() + posenc_dim(mlp.n_freq));
    }
    return x;
}
}  // namespace

TEST_CASE("mlp: zero-initialized heads produce exactly zero offsets") {
    Rng rng(23);
    NonRigidMlp mlp = small_mlp(rng);
    MatXr x = random_input(mlp, rng, 5);
    auto out = mlp.forward(x, nullptr);
    CHECK(out.dx.cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.dr.cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.ds.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp forward is deterministic") {
    Rng rng(29);
    NonRigidMlp mlp = small_mlp(rng);
    // non-trivial heads
    for (Eigen::Index i = 0; i < mlp.head_dx_w.size(); ++i) mlp.head_dx_w.data()[i] = 0.05 * rng.normal();
    MatXr x = random_input(mlp, rng, 7);
    auto a = mlp.forward(x, nullptr);
    auto b = mlp.forward(x, nullptr);
    CHECK((a.dx - b.dx).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp gradients match finite differences for every weight") {
    Rng rng(31);
    NonRigidMlp mlp = small_mlp(rng, 8);
    auto randomize = [&](MatXr& w, double s) {
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = s * rng.normal();
    };
    randomize(mlp.head_dx_w, 0.2);
    randomize(mlp.head_dr_w, 0.2);
    randomize(mlp.head_ds_w, 0.2);

    MatXr x = random_input(mlp, rng, 3);
    Eigen::Index n = x.rows();

    // random functional over all three heads
    MatX3 cdx(n, 3), cds(n, 3);
    MatX4 cdr(n, 4);
    for (Eigen::Index i = 0; i < cdx.size(); ++i) cdx.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < cdr.size(); ++i) cdr.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < cds.size(); ++i) cds.data()[i] = rng.normal();

    auto loss = [&]() {
        auto out = mlp.forward(x, nullptr);
        return (cdx.array() * out.dx.array()).sum() + (cdr.array() * out.dr.array()).sum() +
               (cds.array() * out.ds.array()).sum();
    };

    NonRigidMlp::Cache cache;
    mlp.forward(x, &cache);
    NonRigidMlp::Grads grads;
    grads.setZero(mlp);
    MatXr d_input = mlp.backward(cache, cdx, cdr, cds, grads);

    VecX flat, gflat;
    mlp.to_flat(flat);
    NonRigidMlp::grads_to_flat(grads, gflat);

    auto stats = test::check_gradient(
        flat.size(), [&](Eigen::Index i) { return flat[i]; },
        [&](Eigen::Index i, double v) {
            flat[i] = v;
            mlp.from_flat(flat);
        },
        loss, [&](Eigen::Index i) { return gflat[i]; }, 1e-4, 1e-3, 1e-6);
    INFO("failed ", stats.failed, "/", stats.checked, " worst idx ", stats.worst_index, " analytic ",
         stats.worst_analytic, " fd ", stats.worst_fd);
    CHECK(stats.failed == 0);

    // input gradient
    auto stats_in = test::check_gradient(
        x.size(), [&](Eigen::Index i) { return x.data()[i]; },
        [&](Eigen::Index i, double v) { x.data()[i] = v; }, loss,
        [&](Eigen::Index i) { return d_input.data()[i]; }, 1e-4, 1e-3, 1e-6);
    INFO("input grads failed ", stats_in.failed, "/", stats_in.checked);
    CHECK(stats_in.failed == 0);
}

TEST_CASE("positional encoding gradient") {
    Rng rng(37);
    Vec3 p(0.4, -0.8, 0.2);
    int n_freq = 6;
    int dim = posenc_dim(n_freq);
    VecX coef(dim);
    for (Eigen::Index i = 0; i < dim; ++i) coef[i] = rng.normal();

    auto loss = [&](const Vec3& q) {
        std::vector<double> enc(static_cast<size_t>(dim));
        posenc(q, n_freq, enc.data());
        double s = 0;
        for (int i = 0; i < dim; ++i) s += coef[i] * enc[static_cast<size_t>(i)];
        return s;
    };
    Vec3 grad = Vec3::Zero();
    posenc_backward(p, n_freq, coef.data(), grad);
    for (int c = 0; c < 3; ++c) {
        double fd = test::central_diff(
            [&](double v) {
                Vec3 q = p;
                q[c] = v;
                return loss(q);
            },
            p[c], 1e-5);
        CHECK(test::close(grad[c], fd, 1e-5, 1e-8));
    }
}
