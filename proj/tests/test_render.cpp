#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gsa/render.hpp"
#include "gsa/rng.hpp"
#include "test_util.hpp"

using namespace gsa;

namespace {

struct Scene {
    MatX3 positions;
    MatX4 rotations;
    MatX4 rotations_canonical;
    MatX3 log_scales;
    VecX opacity_logits;
    MatXr sh;
    int sh_degree = 1;
    Camera camera;
    RenderOptions opts;

    RenderInput input() const {
        RenderInput in;
        in.positions = &positions;
        in.rotations = &rotations;
        in.rotations_canonical = &rotations_canonical;
        in.log_scales = &log_scales;
        in.opacity_logits = &opacity_logits;
        in.sh_coeffs = &sh;
        in.sh_degree = sh_degree;
        return in;
    }
};

Scene make_scene(uint64_t seed, Eigen::Index n, int res, int sh_degree = 1) {
    Scene s;
    s.sh_degree = sh_degree;
    Rng rng(seed);
    s.positions.resize(n, 3);
    s.rotations.resize(n, 4);
    s.rotations_canonical.resize(n, 4);
    s.log_scales.resize(n, 3);
    s.opacity_logits.resize(n);
    s.sh.resize(n, 3 * sh_coeff_count(sh_degree));
    for (Eigen::Index i = 0; i < n; ++i) {
        s.positions.row(i) << rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3);
        Quat q{1.0 + 0.2 * rng.normal(), 0.2 * rng.normal(), 0.2 * rng.normal(), 0.2 * rng.normal()};
        s.rotations.row(i) = q.normalized().coeffs().transpose();
        Quat qc{1.0 + 0.2 * rng.normal(), 0.2 * rng.normal(), 0.2 * rng.normal(), 0.2 * rng.normal()};
        s.rotations_canonical.row(i) = qc.normalized().coeffs().transpose();
        s.log_scales.row(i) << rng.uniform(-2.6, -1.8), rng.uniform(-2.6, -1.8), rng.uniform(-2.6, -1.8);
        s.opacity_logits[i] = rng.uniform(0.0, 1.5);  // sigmoid in (0.5, 0.82)
        for (int c = 0; c < s.sh.cols(); ++c) s.sh(i, c) = rng.uniform(-0.15, 0.15);
    }
    s.camera = Camera::look_at(Vec3(0, 0, -3), Vec3(0, 0, 0), Vec3(0, 1, 0), 1.2 * res, res, res);
    s.opts.background = Vec3(0.2, 0.25, 0.3);
    return s;
}

}  // namespace

TEST_CASE("project: optical axis, pinhole scaling, depth halves the footprint") {
    Camera cam = Camera::look_at(Vec3(0, 0, -4), Vec3(0, 0, 0), Vec3(0, 1, 0), 120.0, 64, 64);
    double z_cam = 2.5;  // depth along the view axis
    Vec3 world_on_axis(0, 0, z_cam - 4.0);
    Projection p = project(world_on_axis, Quat::identity(), Vec3::Constant(std::log(0.05)), cam);
    REQUIRE(p.valid);
    CHECK(p.mean2.x() == doctest::Approx(cam.cx).epsilon(1e-9));
    CHECK(p.mean2.y() == doctest::Approx(cam.cy).epsilon(1e-9));
    CHECK(p.depth == doctest::Approx(z_cam));

    // isotropic sigma: cov2d ~ (f*sigma/z)^2 I + 0.3 I on axis
    double sigma = 0.05;
    double expect = std::pow(120.0 * sigma / z_cam, 2.0);
    CHECK(p.cov2(0, 0) == doctest::Approx(expect + 0.3).epsilon(1e-6));
    CHECK(p.cov2(1, 1) == doctest::Approx(expect + 0.3).epsilon(1e-6));
    CHECK(std::abs(p.cov2(0, 1)) < 1e-12);

    Projection p2 = project(Vec3(0, 0, 2.0 * z_cam - 4.0), Quat::identity(),
                            Vec3::Constant(std::log(sigma)), cam);
    double sd1 = std::sqrt(p.cov2(0, 0) - 0.3);
    double sd2 = std::sqrt(p2.cov2(0, 0) - 0.3);
    CHECK(sd1 / sd2 == doctest::Approx(2.0).epsilon(0.01));

    // behind-camera culled
    CHECK_FALSE(project(Vec3(0, 0, -5.0), Quat::identity(), Vec3::Zero(), cam).valid);
}

TEST_CASE("empty cloud renders the background") {
    Scene s = make_scene(1, 0, 16);
    RenderOutput out = render(s.input(), s.camera, s.opts);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) CHECK(out.image.at(y, x, c) == doctest::Approx(s.opts.background[c]));
}

TEST_CASE("single opaque splat matches the closed-form composite") {
    Scene s = make_scene(2, 1, 32, 0);
    s.opts.background = Vec3::Zero();
    s.positions.row(0) << 0, 0, 0;
    s.rotations.row(0) << 1, 0, 0, 0;
    s.rotations_canonical.row(0) << 1, 0, 0, 0;
    s.log_scales.row(0).setConstant(std::log(0.08));
    s.opacity_logits[0] = 2.0;
    // white: dc = (1-0.5)/Y00
    for (int c = 0; c < 3; ++c) s.sh(0, c) = 0.5 / 0.28209479177387814;

    RenderCache cache;
    RenderOutput out = render(s.input(), s.camera, s.opts, &cache);
    const GaussianProj& g = cache.proj[0];
    REQUIRE(g.valid);

    for (int y = 12; y < 20; ++y) {
        for (int x = 12; x < 20; ++x) {
            double dx = (x + 0.5) - g.mean2.x(), dy = (y + 0.5) - g.mean2.y();
            double power = -0.5 * (g.conic[0] * dx * dx + 2 * g.conic[1] * dx * dy + g.conic[2] * dy * dy);
            double alpha = std::min(0.99, sigmoid(2.0) * std::exp(power));
            for (int c = 0; c < 3; ++c)
                CHECK(out.image.at(y, x, c) == doctest::Approx(alpha * 1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("a fully opaque front splat suppresses the back one") {
    Scene s = make_scene(3, 2, 32, 0);
    s.opts.background = Vec3::Zero();
    // both on axis, front nearly opaque
    s.positions.row(0) << 0, 0, -0.5;
    s.positions.row(1) << 0, 0, 0.5;
    for (int i = 0; i < 2; ++i) {
        s.rotations.row(i) << 1, 0, 0, 0;
        s.rotations_canonical.row(i) << 1, 0, 0, 0;
        // footprint wide enough that alpha clamps at the centre pixel
        s.log_scales.row(i).setConstant(std::log(0.5));
    }
    s.opacity_logits[0] = 12.0;  // sigmoid ~ 1 -> alpha clamps at 0.99
    s.opacity_logits[1] = 12.0;
    for (int c = 0; c < 3; ++c) {
        s.sh(0, c) = 0.0;                              // gray 0.5 front
        s.sh(1, c) = 0.5 / 0.28209479177387814;        // white back
    }
    RenderOutput out = render(s.input(), s.camera, s.opts);
    // centre pixel: back contribution <= (1-0.99) * 0.99 * 1.0 = 1%
    int cx = 16, cy = 16;
    double front_only = 0.99 * 0.5;
    CHECK(out.image.at(cy, cx, 0) >= front_only - 1e-9);
    CHECK(out.image.at(cy, cx, 0) <= front_only + 0.011);
}

TEST_CASE("compositing weights plus residual transmittance equal one") {
    Scene s = make_scene(4, 40, 48);
    RenderCache cache;
    RenderOutput out = render(s.input(), s.camera, s.opts, &cache);
    // alpha = 1 - final T exactly; re-derive weight sum per pixel
    for (int y = 0; y < 48; ++y) {
        for (int x = 0; x < 48; ++x) {
            size_t pix = static_cast<size_t>(y) * 48 + x;
            CHECK(out.alpha[pix] == doctest::Approx(1.0 - cache.final_t[pix]).epsilon(1e-12));
        }
    }
    size_t t = 0;
    double worst = 0.0;
    for (int ty = 0; ty < cache.tiles_y; ++ty) {
        for (int tx = 0; tx < cache.tiles_x; ++tx, ++t) {
            const auto& list = cache.tile_lists[t];
            for (int y = ty * 16; y < std::min(48, ty * 16 + 16); ++y) {
                for (int x = tx * 16; x < std::min(48, tx * 16 + 16); ++x) {
                    double t_run = 1.0, wsum = 0.0;
                    int visited = 0;
                    for (int id : list) {
                        ++visited;
                        const GaussianProj& g = cache.proj[static_cast<size_t>(id)];
                        double dx = x + 0.5 - g.mean2.x(), dy = y + 0.5 - g.mean2.y();
                        double power =
                            -0.5 * (g.conic[0] * dx * dx + 2 * g.conic[1] * dx * dy + g.conic[2] * dy * dy);
                        if (power > 0) continue;
                        double alpha = std::min(0.99, g.sigma * std::exp(power));
                        if (alpha < s.opts.min_alpha) continue;
                        wsum += alpha * t_run;
                        t_run *= 1 - alpha;
                        if (t_run < s.opts.transmittance_floor) break;
                    }
                    worst = std::max(worst, std::abs(wsum + t_run - 1.0));
                }
            }
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("render is bit-identical under input permutation") {
    Scene s = make_scene(5, 25, 32);
    RenderOutput base = render(s.input(), s.camera, s.opts);

    // reversed order
    Scene r = s;
    Eigen::Index n = s.positions.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index j = n - 1 - i;
        r.positions.row(i) = s.positions.row(j);
        r.rotations.row(i) = s.rotations.row(j);
        r.rotations_canonical.row(i) = s.rotations_canonical.row(j);
        r.log_scales.row(i) = s.log_scales.row(j);
        r.opacity_logits[i] = s.opacity_logits[j];
        r.sh.row(i) = s.sh.row(j);
    }
    RenderOutput perm = render(r.input(), r.camera, r.opts);
    for (size_t i = 0; i < base.image.data.size(); ++i) CHECK(base.image.data[i] == perm.image.data[i]);
}

TEST_CASE("non-finite Gaussians are skipped and tallied") {
    Scene s = make_scene(6, 3, 16);
    s.positions(1, 0) = std::numeric_limits<double>::quiet_NaN();
    RenderOutput out = render(s.input(), s.camera, s.opts);
    CHECK(out.skipped_nonfinite == 1);
    for (double v : out.image.data) CHECK(std::isfinite(v));
}

TEST_CASE("render_backward: zero upstream gradient gives zero gradients") {
    Scene s = make_scene(7, 5, 16);
    RenderCache cache;
    RenderOutput out = render(s.input(), s.camera, s.opts, &cache);
    Image zero(out.image.width, out.image.height);
    RenderGrads g = render_backward(s.input(), s.camera, s.opts, cache, zero);
    CHECK(g.d_positions.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.d_sh_coeffs.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.d_opacity_logits.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("off-screen Gaussians receive no gradient") {
    Scene s = make_scene(8, 2, 16);
    s.positions.row(1) << 50.0, 0.0, 0.0;  // far outside the frustum footprint
    RenderCache cache;
    RenderOutput out = render(s.input(), s.camera, s.opts, &cache);
    Image ones(out.image.width, out.image.height, 1.0);
    RenderGrads g = render_backward(s.input(), s.camera, s.opts, cache, ones);
    CHECK(g.d_positions.row(1).norm() == 0.0);
    CHECK(g.d_sh_coeffs.row(1).norm() == 0.0);
}

TEST_CASE("render_backward matches finite differences on an 8x8 scene") {
    Scene s = make_scene(11, 3, 8, 1);
    s.opts.radius_sigma = 6.0;  // keep every tested pixel far from the footprint cutoff

    // random image-space functional
    Rng rng(55);
    Image coef(8, 8);
    for (auto& v : coef.data) v = rng.normal();

    auto loss = [&]() {
        RenderOutput out = render(s.input(), s.camera, s.opts);
        double sum = 0;
        for (size_t i = 0; i < out.image.data.size(); ++i) sum += coef.data[i] * out.image.data[i];
        return sum;
    };

    RenderCache cache;
    render(s.input(), s.camera, s.opts, &cache);
    RenderGrads g = render_backward(s.input(), s.camera, s.opts, cache, coef);

    auto run_check = [&](double* data, Eigen::Index count, const double* analytic, const char* what) {
        auto stats = test::check_gradient(
            count, [&](Eigen::Index i) { return data[i]; },
            [&](Eigen::Index i, double v) { data[i] = v; }, loss,
            [&](Eigen::Index i) { return analytic[i]; });
        INFO(what, ": failed ", stats.failed, "/", stats.checked, " worst idx ", stats.worst_index,
             " analytic ", stats.worst_analytic, " fd ", stats.worst_fd);
        CHECK(stats.failed == 0);
    };

    run_check(s.positions.data(), s.positions.size(), g.d_positions.data(), "positions");
    run_check(s.rotations.data(), s.rotations.size(), g.d_rotations.data(), "rotations");
    run_check(s.rotations_canonical.data(), s.rotations_canonical.size(),
              g.d_rotations_canonical.data(), "rotations_canonical");
    run_check(s.log_scales.data(), s.log_scales.size(), g.d_log_scales.data(), "log_scales");
    run_check(s.opacity_logits.data(), s.opacity_logits.size(), g.d_opacity_logits.data(), "opacity");
    run_check(s.sh.data(), s.sh.size(), g.d_sh_coeffs.data(), "sh");
}
