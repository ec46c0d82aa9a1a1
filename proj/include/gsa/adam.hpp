#pragma once

#include "gsa/common.hpp"

namespace gsa {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam moment/step state per parameter group. Rows can be remapped when
// the Gaussian set changes (densify/prune keep survivor moments).
struct AdamState {
    VecX m;
    VecX v;
    int64_t step = 0;

    void init(Eigen::Index n) {
        m = VecX::Zero(n);
        v = VecX::Zero(n);
        step = 0;
    }

    bool initialized() const { return m.size() > 0; }
};

// Bias-corrected Adam update in place. Returns false (and leaves params,
// moments and the step counter untouched) when the gradient is non-finite.
// `clip` > 0 bounds each component of the applied update.
bool adam_step(AdamState& state, Eigen::Ref<VecX> params, const VecX& grads, double lr,
               const AdamConfig& cfg = {}, double clip = 0.0);

// Remap state rows after a cloud resize: new row i keeps the moments of
// src_index[i] (or starts at zero when src_index[i] < 0). `stride` is the
// number of scalars per Gaussian in this group.
void remap_adam_state(AdamState& state, const std::vector<int>& src_index, int stride);

}  // namespace gsa
