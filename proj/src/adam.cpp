#include "gsa/adam.hpp"

#include <cmath>
#include <vector>

namespace gsa {

bool adam_step(AdamState& state, Eigen::Ref<VecX> params, const VecX& grads, double lr,
               const AdamConfig& cfg, double clip) {
    require(params.size() == grads.size(), "adam_step: size mismatch");
    if (!state.initialized()) state.init(params.size());
    require(state.m.size() == params.size(), "adam_step: state size mismatch");
    if (!grads.allFinite()) return false;

    state.step += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
    state.v = cfg.beta2 * state.v.array().matrix() + (1.0 - cfg.beta2) * grads.cwiseProduct(grads);
    VecX update =
        (lr * (state.m / bc1).array() / ((state.v / bc2).array().sqrt() + cfg.eps)).matrix();
    if (clip > 0.0) update = update.cwiseMax(-clip).cwiseMin(clip);
    params -= update;
    return true;
}

void remap_adam_state(AdamState& state, const std::vector<int>& src_index, int stride) {
    if (!state.initialized()) return;
    Eigen::Index n_new = static_cast<Eigen::Index>(src_index.size()) * stride;
    VecX m = VecX::Zero(n_new), v = VecX::Zero(n_new);
    for (size_t i = 0; i < src_index.size(); ++i) {
        int src = src_index[i];
        if (src < 0) continue;
        m.segment(static_cast<Eigen::Index>(i) * stride, stride) =
            state.m.segment(static_cast<Eigen::Index>(src) * stride, stride);
        v.segment(static_cast<Eigen::Index>(i) * stride, stride) =
            state.v.segment(static_cast<Eigen::Index>(src) * stride, stride);
    }
    state.m = std::move(m);
    state.v = std::move(v);
}

}  // namespace gsa
