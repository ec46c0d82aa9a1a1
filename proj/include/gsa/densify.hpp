#pragma once

#include <vector>

#include "gsa/cloud.hpp"
#include "gsa/rng.hpp"

namespace gsa {

struct DensifyConfig {
    double grad_threshold = 2e-4;      // on the mean accumulated 2D position-gradient norm
    int densify_interval = 100;
    int densify_until = 1500;
    int opacity_reset_interval = 3000;
    double prune_opacity = 0.005;
    double epsilon_scale_rel = 0.01;   // split-with-scale threshold, x bbox diagonal
    double clone_vs_split_rel = 0.01;  // scale boundary between clone and split, x extent
    double split_scale_shrink = 1.6;
    bool split_with_scale_enabled = true;
};

// New cloud plus, for every new row, the source row it was derived from
// (-1 for rows whose optimizer moments should start at zero).
struct CloudUpdate {
    GaussianCloud cloud;
    std::vector<int> src_index;
    int n_cloned = 0;
    int n_split = 0;
    int n_pruned = 0;
    int n_scale_split = 0;
};

// 3D-GS style clone/split/prune on the mean accumulated gradient statistic.
CloudUpdate densify_and_prune(const GaussianCloud& cloud, const VecX& grad_accum,
                              const Eigen::VectorXi& grad_count, const DensifyConfig& cfg,
                              double scene_extent, Rng& rng);

// Replaces every Gaussian whose max axis scale exceeds epsilon_scale with two
// identical Gaussians of half the size at the same position.
CloudUpdate split_with_scale(const GaussianCloud& cloud, double epsilon_scale);

// Clamp opacities down to at most `ceiling` (logit domain rewrite).
void reset_opacity(GaussianCloud& cloud, double ceiling = 0.01);

}  // namespace gsa
