#pragma once

#include <vector>

#include "gsa/common.hpp"
#include "gsa/image.hpp"

namespace gsa {

struct LossConfig {
    double lambda_ssim = 0.2;
    double lambda_rot = 1.0;
    double lambda_iso = 1.0;
};

// Mean absolute difference and its (sub)gradient w.r.t. `rendered`.
double l1_loss(const Image& rendered, const Image& target, Image* d_rendered);

// 1 - mean SSIM (11x11 Gaussian window, sigma 1.5, C1=0.01^2, C2=0.03^2,
// zero-padded same-size filtering, averaged over pixels and channels).
double ssim_loss(const Image& rendered, const Image& target, Image* d_rendered);

// Mean SSIM as a metric (no gradients).
double ssim_metric(const Image& a, const Image& b);

// 10*log10(1/MSE) on [0,1] images; +inf for identical inputs.
double psnr(const Image& a, const Image& b);

// Canonical-space neighbourhood graph for the rigid prior. Rows with fewer
// than k neighbours (tiny clouds) are padded with -1.
struct RigidPriorGraph {
    MatXi neighbors;  // N x k
    MatXr weights;    // N x k, exp(-lambda_w * |x_j - x_i|^2)
    double lambda_w = 2000.0;

    Eigen::Index size() const { return neighbors.rows(); }
    int k() const { return static_cast<int>(neighbors.cols()); }
};

RigidPriorGraph build_rigid_prior_graph(const MatX3& canonical_positions, int k = 5,
                                        double lambda_w = 2000.0);

struct PairLossResult {
    double value = 0.0;
};

// Rotation-coherence loss over relative rotations q_o * q_c^-1, sign-aligned
// to a positive scalar part. Gradients are accumulated into the d_* outputs
// (callers zero them).
double rot_loss(const RigidPriorGraph& graph, const MatX4& q_canonical, const MatX4& q_observed,
                MatX4* d_q_canonical, MatX4* d_q_observed);

// Isometry loss | |dx_o| - |dx_c| | over graph edges.
double iso_loss(const RigidPriorGraph& graph, const MatX3& x_canonical, const MatX3& x_observed,
                MatX3* d_x_canonical, MatX3* d_x_observed);

struct TotalLossParts {
    double l1 = 0.0;
    double ssim = 0.0;
    double rot = 0.0;
    double iso = 0.0;
};

inline double total_loss(const TotalLossParts& parts, const LossConfig& cfg) {
    return parts.l1 + cfg.lambda_ssim * parts.ssim + cfg.lambda_rot * parts.rot +
           cfg.lambda_iso * parts.iso;
}

}  // namespace gsa
