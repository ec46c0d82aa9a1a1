#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "gsa/adam.hpp"
#include "gsa/avatar.hpp"
#include "gsa/dataset.hpp"
#include "gsa/densify.hpp"
#include "gsa/losses.hpp"
#include "gsa/rng.hpp"

namespace gsa {

struct TrainConfig {
    int total_steps = 2000;
    double warmup_frac = 0.1;  // non-rigid field frozen at the start
    uint64_t seed = 1;
    int threads = 0;
    int sh_degree = 3;

    double lr_position = 1.6e-4;
    double lr_position_final = 1.6e-6;
    double lr_rotation = 1e-3;
    double lr_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_sh = 2.5e-3;
    double lr_mlp = 2e-3;
    double lr_body = 2e-3;
    double body_trust_region = 0.05;
    bool refine_poses = true;
    bool refine_beta = true;

    int binding_k = 3;
    double binding_sigma = 0.1;
    int prior_k = 5;
    double prior_lambda_w = 2000.0;

    LossConfig loss;
    DensifyConfig densify;

    int mlp_width = 256;
    int mlp_depth = 8;
    int mlp_skip = 4;
    int mlp_freq = 6;

    int fixed_frame = -1;  // >= 0: always optimize this train frame
    int log_interval = 100;
    bool quiet = false;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

class Trainer {
public:
    Trainer(const SceneDataset& dataset, const TrainConfig& cfg);

    struct StepInfo {
        int step = 0;
        size_t frame = 0;
        TotalLossParts parts;
        double total = 0.0;
    };

    StepInfo step();
    void run(const std::function<void(const StepInfo&)>& on_log = nullptr);

    struct Gradients {
        MatX3 d_positions;
        MatX4 d_rotations;
        MatX3 d_log_scales;
        VecX d_opacity;
        MatXr d_sh;
        NonRigidMlp::Grads d_mlp;
        bool has_mlp = false;
        MatX3 d_theta;
        Vec3 d_translation = Vec3::Zero();
        VecX d_beta;
        VecX grad2d_norm;
        std::vector<char> visible;
        TotalLossParts parts;
        double total = 0.0;
    };

    // Loss and full analytic gradients of one train frame at the current
    // parameters; no update applied. `force_mlp` bypasses the warmup freeze.
    Gradients compute_gradients(size_t train_frame, bool force_mlp = false);

    // Forward-only total loss of one train frame (same path as above).
    double frame_loss(size_t train_frame, bool force_mlp = false, TotalLossParts* parts = nullptr);

    Image render_train_frame(size_t train_frame);
    Checkpoint make_checkpoint() const;

    // Structural event used by densification; also exposed for the
    // split-with-scale acceptance probes.
    void apply_cloud_update(const CloudUpdate& update);
    void rebuild_structures();

    GaussianCloud& cloud() { return cloud_; }
    NonRigidMlp& mlp() { return mlp_; }
    std::vector<PoseState>& poses() { return poses_; }
    VecX& beta() { return beta_; }
    const std::vector<size_t>& train_frames() const { return train_idx_; }
    const Image& target(size_t train_frame) const { return targets_[train_frame]; }
    const BodyModel& body() const { return body_; }
    const RigidPriorGraph& prior_graph() const { return graph_; }
    const Binding& binding() const { return binding_; }
    int steps_done() const { return step_count_; }
    int nonfinite_group_skips() const { return nonfinite_skips_; }

private:
    struct FrameEval;
    FrameEval evaluate(size_t train_frame, bool with_grads, bool use_mlp);

    TrainConfig cfg_;
    std::string body_model_path_;
    BodyModel body_;
    CanonicalBody canon_;
    GaussianCloud cloud_;
    NonRigidMlp mlp_;
    Binding binding_;
    RigidPriorGraph graph_;
    std::vector<PoseState> poses_;        // one per dataset frame
    std::vector<FramePose> frame_meta_;   // file/split/camera
    std::vector<size_t> train_idx_;       // dataset indices of train frames
    std::vector<Image> targets_;          // per train frame, mask-composited
    Vec3 background_ = Vec3::Zero();
    VecX beta_;
    Rng rng_;

    AdamState st_positions_, st_rotations_, st_scales_, st_opacity_, st_sh_, st_mlp_, st_beta_;
    std::vector<AdamState> st_frame_;  // per train frame: theta + translation
    VecX grad_accum_;
    Eigen::VectorXi grad_count_;
    int step_count_ = 0;
    int nonfinite_skips_ = 0;
};

}  // namespace gsa
