#pragma once

#include <vector>

#include "gsa/camera.hpp"
#include "gsa/cloud.hpp"
#include "gsa/image.hpp"
#include "gsa/quat.hpp"

namespace gsa {

// Everything the rasterizer needs per Gaussian, in observation space.
// q_canonical feeds the SH frame: directions are pulled back through the
// relative rotation q_obs * q_canonical^-1 before evaluating SH.
struct RenderInput {
    const MatX3* positions = nullptr;       // observed
    const MatX4* rotations = nullptr;       // observed, unit
    const MatX4* rotations_canonical = nullptr;  // unit
    const MatX3* log_scales = nullptr;
    const VecX* opacity_logits = nullptr;
    const MatXr* sh_coeffs = nullptr;
    int sh_degree = 3;

    Eigen::Index size() const { return positions->rows(); }
};

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    double alpha_clamp = 0.99;
    double transmittance_floor = 1e-4;
    double cov2d_floor = 0.3;     // px^2 added to the projected covariance diagonal
    double radius_sigma = 3.0;    // footprint cutoff in projected standard deviations
    int tile_size = 16;
    double min_alpha = 1e-12;
};

struct RenderOutput {
    Image image;
    std::vector<double> alpha;  // H*W
    int skipped_nonfinite = 0;
};

// (mean2d, cov2d, depth) of one Gaussian; valid=false when culled.
struct Projection {
    bool valid = false;
    Vec2 mean2 = Vec2::Zero();
    Mat2 cov2 = Mat2::Zero();
    double depth = 0.0;
};

Projection project(const Vec3& position, const Quat& rotation, const Vec3& log_scale,
                   const Camera& camera, double cov2d_floor = 0.3);

struct RenderCache;  // opaque to callers

RenderOutput render(const RenderInput& in, const Camera& camera, const RenderOptions& opts,
                    RenderCache* cache = nullptr);

struct RenderGrads {
    MatX3 d_positions;
    MatX4 d_rotations;
    MatX4 d_rotations_canonical;
    MatX3 d_log_scales;
    VecX d_opacity_logits;
    MatXr d_sh_coeffs;
    VecX grad2d_norm;  // per-Gaussian ||sum of dL/d(mean2d)||, densification stat
};

RenderGrads render_backward(const RenderInput& in, const Camera& camera, const RenderOptions& opts,
                            const RenderCache& cache, const Image& d_image);

// --- cache internals (exposed so render_backward and tests can see them) ---

struct GaussianProj {
    bool valid = false;
    Vec2 mean2;
    double depth = 0.0;
    double conic[3];      // inverse 2D covariance (a, b, c)
    double cov2[3];       // projected covariance (a, b, c)
    double radius = 0.0;
    Vec3 p_cam;
    Vec3 color_raw;       // before the zero clamp
    Vec3 color;
    double sigma = 0.0;   // activated opacity
    Vec3 dir_world;       // unit view direction, world frame
    double dir_dist = 0.0;
    Quat q_rel;
    Vec3 d_bar;           // canonicalized SH direction
};

struct RenderCache {
    std::vector<GaussianProj> proj;
    std::vector<int> depth_order;            // valid indices, front to back
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<int>> tile_lists;  // gaussian ids, front to back
    std::vector<double> final_t;             // per pixel
    std::vector<int> n_visited;              // per pixel, entries walked in its tile list
};

}  // namespace gsa
