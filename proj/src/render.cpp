#include "gsa/render.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "gsa/parallel.hpp"
#include "gsa/sh.hpp"

namespace gsa {

namespace {

// EWA projection Jacobian at a camera-space point.
inline void projection_jacobian(const Camera& cam, const Vec3& p, Eigen::Matrix<double, 2, 3>& j) {
    double z = p.z(), iz = 1.0 / z, iz2 = iz * iz;
    j << cam.fx * iz, 0.0, -cam.fx * p.x() * iz2,
         0.0, cam.fy * iz, -cam.fy * p.y() * iz2;
}

struct PixelGrad {
    double mean2[2] = {0, 0};
    double conic[3] = {0, 0, 0};
    double color[3] = {0, 0, 0};
    double sigma = 0;
};

}  // namespace

Projection project(const Vec3& position, const Quat& rotation, const Vec3& log_scale,
                   const Camera& camera, double cov2d_floor) {
    Projection out;
    Vec3 p_cam = camera.world_to_camera.apply(position);
    if (p_cam.z() <= camera.near || p_cam.z() > camera.far) return out;
    out.valid = true;
    out.depth = p_cam.z();
    out.mean2 = Vec2(camera.fx * p_cam.x() / p_cam.z() + camera.cx,
                     camera.fy * p_cam.y() / p_cam.z() + camera.cy);
    Mat3 cov3 = covariance_from(log_scale, rotation);
    Eigen::Matrix<double, 2, 3> j;
    projection_jacobian(camera, p_cam, j);
    Eigen::Matrix<double, 2, 3> w2 = j * camera.world_to_camera.R;
    out.cov2 = w2 * cov3 * w2.transpose() + cov2d_floor * Mat2::Identity();
    return out;
}

RenderOutput render(const RenderInput& in, const Camera& camera, const RenderOptions& opts,
                    RenderCache* cache_out) {
    camera.validate();
    Eigen::Index n = in.size();
    int w = camera.width, h = camera.height;

    RenderCache local;
    RenderCache& cache = cache_out ? *cache_out : local;
    cache.proj.assign(static_cast<size_t>(n), GaussianProj{});

    const Mat3& r_wc = camera.world_to_camera.R;
    Vec3 cam_center = camera.center();
    int sh_dim = sh_coeff_count(in.sh_degree);
    std::atomic<int> skipped{0};

    parallel_chunks(static_cast<size_t>(n), 256, [&](size_t lo, size_t hi, size_t) {
        for (size_t ii = lo; ii < hi; ++ii) {
            auto i = static_cast<Eigen::Index>(ii);
            GaussianProj& g = cache.proj[ii];

            Vec3 pos = in.positions->row(i);
            Vec3 s_log = in.log_scales->row(i);
            Quat q_obs{(*in.rotations)(i, 0), (*in.rotations)(i, 1), (*in.rotations)(i, 2),
                       (*in.rotations)(i, 3)};
            Quat q_can{(*in.rotations_canonical)(i, 0), (*in.rotations_canonical)(i, 1),
                       (*in.rotations_canonical)(i, 2), (*in.rotations_canonical)(i, 3)};
            double logit_op = (*in.opacity_logits)[i];

            if (!pos.allFinite() || !s_log.allFinite() || !std::isfinite(logit_op) ||
                !std::isfinite(q_obs.norm()) || !in.sh_coeffs->row(i).allFinite()) {
                skipped.fetch_add(1);
                continue;
            }

            Vec3 p_cam = camera.world_to_camera.apply(pos);
            if (p_cam.z() <= camera.near || p_cam.z() > camera.far) continue;

            g.p_cam = p_cam;
            g.depth = p_cam.z();
            g.mean2 = Vec2(camera.fx * p_cam.x() / p_cam.z() + camera.cx,
                           camera.fy * p_cam.y() / p_cam.z() + camera.cy);

            Mat3 rot = quat_to_matrix(q_obs);
            Vec3 scale = s_log.array().exp();
            Mat3 m = rot * scale.asDiagonal();
            Mat3 cov3 = m * m.transpose();
            Eigen::Matrix<double, 2, 3> j;
            projection_jacobian(camera, p_cam, j);
            Eigen::Matrix<double, 2, 3> w2 = j * r_wc;
            Mat2 cov2 = w2 * cov3 * w2.transpose();
            cov2(0, 0) += opts.cov2d_floor;
            cov2(1, 1) += opts.cov2d_floor;
            double det = cov2(0, 0) * cov2(1, 1) - cov2(0, 1) * cov2(0, 1);
            if (!(det > 0.0) || !std::isfinite(det)) {
                skipped.fetch_add(1);
                continue;
            }
            g.cov2[0] = cov2(0, 0);
            g.cov2[1] = cov2(0, 1);
            g.cov2[2] = cov2(1, 1);
            g.conic[0] = cov2(1, 1) / det;
            g.conic[1] = -cov2(0, 1) / det;
            g.conic[2] = cov2(0, 0) / det;

            double mid = 0.5 * (cov2(0, 0) + cov2(1, 1));
            double lmax = mid + std::sqrt(std::max(0.0, mid * mid - det));
            g.radius = opts.radius_sigma * std::sqrt(lmax);

            // canonicalized view direction for SH
            Vec3 dw = pos - cam_center;
            g.dir_dist = dw.norm();
            g.dir_world = dw / g.dir_dist;
            Vec3 d1 = r_wc * g.dir_world;
            g.q_rel = quat_mul(q_obs, q_can.conjugate());
            g.d_bar = quat_to_matrix(g.q_rel).transpose() * d1;

            double sh_vals[16];
            sh_eval(in.sh_degree, g.d_bar, sh_vals);
            Vec3 color = Vec3::Constant(0.5);
            for (int b = 0; b < sh_dim; ++b)
                for (int c = 0; c < 3; ++c) color[c] += sh_vals[b] * (*in.sh_coeffs)(i, 3 * b + c);
            g.color_raw = color;
            g.color = color.cwiseMax(0.0);
            g.sigma = sigmoid(logit_op);
            g.valid = true;
        }
    });

    // front-to-back order with a fixed tie-break on index
    cache.depth_order.clear();
    for (Eigen::Index i = 0; i < n; ++i)
        if (cache.proj[static_cast<size_t>(i)].valid) cache.depth_order.push_back(static_cast<int>(i));
    std::sort(cache.depth_order.begin(), cache.depth_order.end(), [&](int a, int b) {
        double da = cache.proj[static_cast<size_t>(a)].depth, db = cache.proj[static_cast<size_t>(b)].depth;
        return da < db || (da == db && a < b);
    });

    int ts = opts.tile_size;
    cache.tiles_x = (w + ts - 1) / ts;
    cache.tiles_y = (h + ts - 1) / ts;
    cache.tile_lists.assign(static_cast<size_t>(cache.tiles_x) * cache.tiles_y, {});
    for (int id : cache.depth_order) {
        const GaussianProj& g = cache.proj[static_cast<size_t>(id)];
        int x0 = std::max(0, static_cast<int>(std::floor((g.mean2.x() - g.radius) / ts)));
        int x1 = std::min(cache.tiles_x - 1, static_cast<int>(std::floor((g.mean2.x() + g.radius) / ts)));
        int y0 = std::max(0, static_cast<int>(std::floor((g.mean2.y() - g.radius) / ts)));
        int y1 = std::min(cache.tiles_y - 1, static_cast<int>(std::floor((g.mean2.y() + g.radius) / ts)));
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx)
                cache.tile_lists[static_cast<size_t>(ty) * cache.tiles_x + tx].push_back(id);
    }

    RenderOutput out;
    out.image = Image(w, h);
    out.alpha.assign(static_cast<size_t>(w) * h, 0.0);
    cache.final_t.assign(static_cast<size_t>(w) * h, 1.0);
    cache.n_visited.assign(static_cast<size_t>(w) * h, 0);

    size_t n_tiles = cache.tile_lists.size();
    ThreadPool::instance().run_chunks(n_tiles, [&](size_t t) {
        const auto& list = cache.tile_lists[t];
        int tx = static_cast<int>(t) % cache.tiles_x;
        int ty = static_cast<int>(t) / cache.tiles_x;
        int px0 = tx * ts, px1 = std::min(w, px0 + ts);
        int py0 = ty * ts, py1 = std::min(h, py0 + ts);
        for (int y = py0; y < py1; ++y) {
            for (int x = px0; x < px1; ++x) {
                double px = x + 0.5, py = y + 0.5;
                double t_run = 1.0;
                Vec3 c_acc = Vec3::Zero();
                int visited = 0;
                for (int id : list) {
                    ++visited;
                    const GaussianProj& g = cache.proj[static_cast<size_t>(id)];
                    double dx = px - g.mean2.x(), dy = py - g.mean2.y();
                    double power =
                        -0.5 * (g.conic[0] * dx * dx + 2.0 * g.conic[1] * dx * dy + g.conic[2] * dy * dy);
                    if (power > 0.0) continue;
                    double alpha = std::min(opts.alpha_clamp, g.sigma * std::exp(power));
                    if (alpha < opts.min_alpha) continue;
                    c_acc += g.color * (alpha * t_run);
                    t_run *= 1.0 - alpha;
                    if (t_run < opts.transmittance_floor) break;
                }
                size_t pix = static_cast<size_t>(y) * w + x;
                cache.final_t[pix] = t_run;
                cache.n_visited[pix] = visited;
                out.alpha[pix] = 1.0 - t_run;
                Vec3 c_final = c_acc + t_run * opts.background;
                for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = c_final[c];
            }
        }
    });
    out.skipped_nonfinite = skipped.load();
    return out;
}

RenderGrads render_backward(const RenderInput& in, const Camera& camera, const RenderOptions& opts,
                            const RenderCache& cache, const Image& d_image) {
    Eigen::Index n = in.size();
    int w = camera.width, h = camera.height;
    int ts = opts.tile_size;
    int sh_dim = sh_coeff_count(in.sh_degree);

    RenderGrads grads;
    grads.d_positions.setZero(n, 3);
    grads.d_rotations.setZero(n, 4);
    grads.d_rotations_canonical.setZero(n, 4);
    grads.d_log_scales.setZero(n, 3);
    grads.d_opacity_logits.setZero(n);
    grads.d_sh_coeffs.setZero(n, 3 * sh_dim);
    grads.grad2d_norm.setZero(n);

    // Per-tile accumulation keyed by position in the tile list, merged in
    // tile order so the reduction is deterministic.
    size_t n_tiles = cache.tile_lists.size();
    std::vector<std::vector<PixelGrad>> tile_grads(n_tiles);

    ThreadPool::instance().run_chunks(n_tiles, [&](size_t t) {
        const auto& list = cache.tile_lists[t];
        if (list.empty()) return;
        auto& acc = tile_grads[t];
        acc.assign(list.size(), PixelGrad{});
        int tx = static_cast<int>(t) % cache.tiles_x;
        int ty = static_cast<int>(t) / cache.tiles_x;
        int px0 = tx * ts, px1 = std::min(w, px0 + ts);
        int py0 = ty * ts, py1 = std::min(h, py0 + ts);
        for (int y = py0; y < py1; ++y) {
            for (int x = px0; x < px1; ++x) {
                size_t pix = static_cast<size_t>(y) * w + x;
                double px = x + 0.5, py = y + 0.5;
                Vec3 dc(d_image.at(y, x, 0), d_image.at(y, x, 1), d_image.at(y, x, 2));
                double t_run = cache.final_t[pix];
                Vec3 s_after = t_run * opts.background;
                // walk the visited prefix back to front, re-deriving alpha
                for (int k = cache.n_visited[pix] - 1; k >= 0; --k) {
                    int id = list[static_cast<size_t>(k)];
                    const GaussianProj& g = cache.proj[static_cast<size_t>(id)];
                    double dx = px - g.mean2.x(), dy = py - g.mean2.y();
                    double power = -0.5 * (g.conic[0] * dx * dx + 2.0 * g.conic[1] * dx * dy +
                                           g.conic[2] * dy * dy);
                    if (power > 0.0) continue;
                    double gval = std::exp(power);
                    double alpha_un = g.sigma * gval;
                    bool clamped = alpha_un > opts.alpha_clamp;
                    double alpha = clamped ? opts.alpha_clamp : alpha_un;
                    if (alpha < opts.min_alpha) continue;
                    double t_before = t_run / (1.0 - alpha);

                    PixelGrad& pg = acc[static_cast<size_t>(k)];
                    double d_alpha = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        pg.color[c] += dc[c] * alpha * t_before;
                        d_alpha += dc[c] * (g.color[c] * t_before - s_after[c] / (1.0 - alpha));
                    }
                    s_after += g.color * (alpha * t_before);
                    t_run = t_before;
                    if (clamped) continue;
                    pg.sigma += gval * d_alpha;
                    double d_g = g.sigma * d_alpha;
                    double d_power = gval * d_g;
                    pg.mean2[0] += (g.conic[0] * dx + g.conic[1] * dy) * d_power;
                    pg.mean2[1] += (g.conic[1] * dx + g.conic[2] * dy) * d_power;
                    pg.conic[0] += -0.5 * dx * dx * d_power;
                    pg.conic[1] += -dx * dy * d_power;
                    pg.conic[2] += -0.5 * dy * dy * d_power;
                }
            }
        }
    });

    // deterministic merge: per-Gaussian totals in tile order
    std::vector<PixelGrad> total(static_cast<size_t>(n));
    for (size_t t = 0; t < n_tiles; ++t) {
        const auto& list = cache.tile_lists[t];
        const auto& acc = tile_grads[t];
        for (size_t k = 0; k < acc.size(); ++k) {
            PixelGrad& dst = total[static_cast<size_t>(list[k])];
            const PixelGrad& src = acc[k];
            dst.mean2[0] += src.mean2[0];
            dst.mean2[1] += src.mean2[1];
            for (int c = 0; c < 3; ++c) {
                dst.conic[c] += src.conic[c];
                dst.color[c] += src.color[c];
            }
            dst.sigma += src.sigma;
        }
    }

    const Mat3& r_wc = camera.world_to_camera.R;
    parallel_chunks(static_cast<size_t>(n), 256, [&](size_t lo, size_t hi, size_t) {
        for (size_t ii = lo; ii < hi; ++ii) {
            auto i = static_cast<Eigen::Index>(ii);
            const GaussianProj& g = cache.proj[ii];
            if (!g.valid) continue;
            const PixelGrad& tg = total[ii];

            grads.grad2d_norm[i] = std::hypot(tg.mean2[0], tg.mean2[1]);

            // opacity
            grads.d_opacity_logits[i] = tg.sigma * g.sigma * (1.0 - g.sigma);

            // color -> SH coefficients and view direction
            Vec3 d_color(tg.color[0], tg.color[1], tg.color[2]);
            for (int c = 0; c < 3; ++c)
                if (g.color_raw[c] < 0.0) d_color[c] = 0.0;  // zero clamp gate
            double sh_vals[16];
            Vec3 sh_grads[16];
            sh_eval_grad(in.sh_degree, g.d_bar, sh_vals, sh_grads);
            Vec3 d_dbar = Vec3::Zero();
            for (int b = 0; b < sh_dim; ++b) {
                double fdot = 0.0;
                for (int c = 0; c < 3; ++c) {
                    grads.d_sh_coeffs(i, 3 * b + c) = sh_vals[b] * d_color[c];
                    fdot += (*in.sh_coeffs)(i, 3 * b + c) * d_color[c];
                }
                d_dbar += sh_grads[b] * fdot;
            }

            // d_bar = R(q_rel)^T (R_wc * dir_world)
            Mat3 r_rel = quat_to_matrix(g.q_rel);
            Vec3 d1 = r_wc * g.dir_world;
            Mat3 d_r_rel = d1 * d_dbar.transpose();
            Vec3 d_d1 = r_rel * d_dbar;
            Mat3 jac[4];
            quat_to_matrix_jacobian(g.q_rel, jac);
            Vec4 d_qrel;
            for (int k = 0; k < 4; ++k) d_qrel[k] = (jac[k].array() * d_r_rel.array()).sum();
            Quat q_obs{(*in.rotations)(i, 0), (*in.rotations)(i, 1), (*in.rotations)(i, 2),
                       (*in.rotations)(i, 3)};
            Quat q_can{(*in.rotations_canonical)(i, 0), (*in.rotations_canonical)(i, 1),
                       (*in.rotations_canonical)(i, 2), (*in.rotations_canonical)(i, 3)};
            Vec4 d_qobs = Vec4::Zero(), d_qcan_conj = Vec4::Zero();
            quat_mul_backward(q_obs, q_can.conjugate(), d_qrel, d_qobs, d_qcan_conj);
            grads.d_rotations_canonical(i, 0) += d_qcan_conj[0];
            grads.d_rotations_canonical(i, 1) -= d_qcan_conj[1];
            grads.d_rotations_canonical(i, 2) -= d_qcan_conj[2];
            grads.d_rotations_canonical(i, 3) -= d_qcan_conj[3];

            // direction normalization
            Vec3 d_dirw = r_wc.transpose() * d_d1;
            Vec3 d_pos = (d_dirw - g.dir_world * g.dir_world.dot(d_dirw)) / g.dir_dist;

            // mean2d -> camera point
            Vec3 d_pcam = Vec3::Zero();
            double z = g.p_cam.z(), iz = 1.0 / z;
            d_pcam.x() += tg.mean2[0] * camera.fx * iz;
            d_pcam.y() += tg.mean2[1] * camera.fy * iz;
            d_pcam.z() += -tg.mean2[0] * camera.fx * g.p_cam.x() * iz * iz -
                          tg.mean2[1] * camera.fy * g.p_cam.y() * iz * iz;

            // conic -> cov2 (conic = cov2^-1)
            Mat2 conic;
            conic << g.conic[0], g.conic[1], g.conic[1], g.conic[2];
            Mat2 d_conic;
            d_conic << tg.conic[0], 0.5 * tg.conic[1], 0.5 * tg.conic[1], tg.conic[2];
            Mat2 d_cov2 = -conic * d_conic * conic;

            // cov2 = W2 cov3 W2^T + floor
            Vec3 s_log = in.log_scales->row(i);
            Vec3 scale = s_log.array().exp();
            Mat3 rot = quat_to_matrix(q_obs);
            Mat3 m = rot * scale.asDiagonal();
            Mat3 cov3 = m * m.transpose();
            Eigen::Matrix<double, 2, 3> j;
            projection_jacobian(camera, g.p_cam, j);
            Eigen::Matrix<double, 2, 3> w2 = j * r_wc;
            Mat3 d_cov3 = w2.transpose() * d_cov2 * w2;
            Eigen::Matrix<double, 2, 3> d_w2 = 2.0 * d_cov2 * w2 * cov3;
            Eigen::Matrix<double, 2, 3> d_j = d_w2 * r_wc.transpose();

            // J depends on the camera point
            double iz2 = iz * iz, iz3 = iz2 * iz;
            d_pcam.x() += d_j(0, 2) * (-camera.fx * iz2);
            d_pcam.y() += d_j(1, 2) * (-camera.fy * iz2);
            d_pcam.z() += d_j(0, 0) * (-camera.fx * iz2) + d_j(1, 1) * (-camera.fy * iz2) +
                          d_j(0, 2) * (2.0 * camera.fx * g.p_cam.x() * iz3) +
                          d_j(1, 2) * (2.0 * camera.fy * g.p_cam.y() * iz3);

            // cov3 = M M^T, M = R S
            Mat3 d_m = 2.0 * d_cov3 * m;
            Mat3 d_rot = d_m * scale.asDiagonal();
            Vec3 d_scale = (rot.transpose() * d_m).diagonal();
            grads.d_log_scales.row(i) += (d_scale.array() * scale.array()).matrix().transpose();

            Mat3 jac_obs[4];
            quat_to_matrix_jacobian(q_obs, jac_obs);
            for (int k = 0; k < 4; ++k) d_qobs[k] += (jac_obs[k].array() * d_rot.array()).sum();
            grads.d_rotations.row(i) += d_qobs.transpose();

            d_pos += r_wc.transpose() * d_pcam;
            grads.d_positions.row(i) += d_pos.transpose();
        }
    });
    return grads;
}

}  // namespace gsa
