#include "gsa/densify.hpp"

#include <cmath>

namespace gsa {

namespace {

void copy_row(GaussianCloud& dst, Eigen::Index di, const GaussianCloud& src, Eigen::Index si) {
    dst.positions.row(di) = src.positions.row(si);
    dst.rotations.row(di) = src.rotations.row(si);
    dst.log_scales.row(di) = src.log_scales.row(si);
    dst.opacity_logits[di] = src.opacity_logits[si];
    dst.sh_coeffs.row(di) = src.sh_coeffs.row(si);
}

}  // namespace

CloudUpdate densify_and_prune(const GaussianCloud& cloud, const VecX& grad_accum,
                              const Eigen::VectorXi& grad_count, const DensifyConfig& cfg,
                              double scene_extent, Rng& rng) {
    Eigen::Index n = cloud.size();
    require(grad_accum.size() == n && grad_count.size() == n, "densify: stats size mismatch");

    double size_limit = cfg.clone_vs_split_rel * scene_extent;
    enum class Op { keep, clone, split, prune };
    std::vector<Op> ops(static_cast<size_t>(n), Op::keep);
    Eigen::Index n_out = 0;
    CloudUpdate up;
    for (Eigen::Index i = 0; i < n; ++i) {
        double mean_grad = grad_count[i] > 0 ? grad_accum[i] / grad_count[i] : 0.0;
        double max_scale = std::exp(cloud.log_scales.row(i).maxCoeff());
        if (sigmoid(cloud.opacity_logits[i]) < cfg.prune_opacity) {
            ops[static_cast<size_t>(i)] = Op::prune;
            ++up.n_pruned;
            continue;
        }
        if (mean_grad >= cfg.grad_threshold) {
            if (max_scale <= size_limit) {
                ops[static_cast<size_t>(i)] = Op::clone;
                ++up.n_cloned;
                n_out += 2;
                continue;
            }
            ops[static_cast<size_t>(i)] = Op::split;
            ++up.n_split;
            n_out += 2;
            continue;
        }
        ++n_out;
    }

    up.cloud.resize(n_out, cloud.sh_degree);
    up.src_index.reserve(static_cast<size_t>(n_out));
    Eigen::Index o = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        switch (ops[static_cast<size_t>(i)]) {
            case Op::prune:
                break;
            case Op::keep:
                copy_row(up.cloud, o, cloud, i);
                up.src_index.push_back(static_cast<int>(i));
                ++o;
                break;
            case Op::clone:
                // duplicate with identical parameters; moments carry over to the
                // surviving copy only
                copy_row(up.cloud, o, cloud, i);
                up.src_index.push_back(static_cast<int>(i));
                ++o;
                copy_row(up.cloud, o, cloud, i);
                up.src_index.push_back(-1);
                ++o;
                break;
            case Op::split: {
                Vec3 scale = cloud.log_scales.row(i).array().exp();
                Quat q = cloud.rotation(i).normalized();
                Mat3 rot = quat_to_matrix(q);
                Vec3 base = cloud.positions.row(i);
                Vec3 new_log = cloud.log_scales.row(i).transpose() -
                               Vec3::Constant(std::log(cfg.split_scale_shrink));
                for (int child = 0; child < 2; ++child) {
                    Vec3 sample(rng.normal() * scale.x(), rng.normal() * scale.y(),
                                rng.normal() * scale.z());
                    copy_row(up.cloud, o, cloud, i);
                    up.cloud.positions.row(o) = (base + rot * sample).transpose();
                    up.cloud.log_scales.row(o) = new_log.transpose();
                    up.src_index.push_back(child == 0 ? static_cast<int>(i) : -1);
                    ++o;
                }
                break;
            }
        }
    }
    return up;
}

CloudUpdate split_with_scale(const GaussianCloud& cloud, double epsilon_scale) {
    require(epsilon_scale > 0.0, "split_with_scale: threshold must be positive");
    Eigen::Index n = cloud.size();
    std::vector<bool> offender(static_cast<size_t>(n));
    Eigen::Index n_out = 0;
    CloudUpdate up;
    for (Eigen::Index i = 0; i < n; ++i) {
        bool big = std::exp(cloud.log_scales.row(i).maxCoeff()) > epsilon_scale;
        offender[static_cast<size_t>(i)] = big;
        n_out += big ? 2 : 1;
        if (big) ++up.n_scale_split;
    }
    up.cloud.resize(n_out, cloud.sh_degree);
    up.src_index.reserve(static_cast<size_t>(n_out));
    Eigen::Index o = 0;
    const double ln2 = std::log(2.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        copy_row(up.cloud, o, cloud, i);
        up.src_index.push_back(static_cast<int>(i));
        if (offender[static_cast<size_t>(i)]) {
            up.cloud.log_scales.row(o).array() -= ln2;
            ++o;
            copy_row(up.cloud, o, cloud, i);
            up.cloud.log_scales.row(o).array() -= ln2;
            up.src_index.push_back(-1);
        }
        ++o;
    }
    return up;
}

void reset_opacity(GaussianCloud& cloud, double ceiling) {
    double cap = logit(ceiling);
    for (Eigen::Index i = 0; i < cloud.size(); ++i)
        cloud.opacity_logits[i] = std::min(cloud.opacity_logits[i], cap);
}

}  // namespace gsa
