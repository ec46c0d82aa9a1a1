#include "gsa/train.hpp"

#include <cmath>
#include <cstdio>

#include "gsa/body_io.hpp"
#include "gsa/parallel.hpp"

namespace gsa {

using nlohmann::json;

json train_config_to_json(const TrainConfig& c) {
    json j;
    j["total_steps"] = c.total_steps;
    j["warmup_frac"] = c.warmup_frac;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["sh_degree"] = c.sh_degree;
    j["lr_position"] = c.lr_position;
    j["lr_position_final"] = c.lr_position_final;
    j["lr_rotation"] = c.lr_rotation;
    j["lr_scale"] = c.lr_scale;
    j["lr_opacity"] = c.lr_opacity;
    j["lr_sh"] = c.lr_sh;
    j["lr_mlp"] = c.lr_mlp;
    j["lr_body"] = c.lr_body;
    j["body_trust_region"] = c.body_trust_region;
    j["refine_poses"] = c.refine_poses;
    j["refine_beta"] = c.refine_beta;
    j["binding_k"] = c.binding_k;
    j["binding_sigma"] = c.binding_sigma;
    j["prior_k"] = c.prior_k;
    j["prior_lambda_w"] = c.prior_lambda_w;
    j["lambda_ssim"] = c.loss.lambda_ssim;
    j["lambda_rot"] = c.loss.lambda_rot;
    j["lambda_iso"] = c.loss.lambda_iso;
    j["grad_threshold"] = c.densify.grad_threshold;
    j["densify_interval"] = c.densify.densify_interval;
    j["densify_until"] = c.densify.densify_until;
    j["opacity_reset_interval"] = c.densify.opacity_reset_interval;
    j["prune_opacity"] = c.densify.prune_opacity;
    j["epsilon_scale_rel"] = c.densify.epsilon_scale_rel;
    j["split_with_scale"] = c.densify.split_with_scale_enabled;
    j["mlp_width"] = c.mlp_width;
    j["mlp_depth"] = c.mlp_depth;
    j["mlp_skip"] = c.mlp_skip;
    j["mlp_freq"] = c.mlp_freq;
    j["fixed_frame"] = c.fixed_frame;
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    require(j.is_object(), "train config: root must be an object");
    auto get = [&](const char* key, auto& dst) {
        if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("total_steps", c.total_steps);
    get("warmup_frac", c.warmup_frac);
    get("seed", c.seed);
    get("threads", c.threads);
    get("sh_degree", c.sh_degree);
    get("lr_position", c.lr_position);
    get("lr_position_final", c.lr_position_final);
    get("lr_rotation", c.lr_rotation);
    get("lr_scale", c.lr_scale);
    get("lr_opacity", c.lr_opacity);
    get("lr_sh", c.lr_sh);
    get("lr_mlp", c.lr_mlp);
    get("lr_body", c.lr_body);
    get("body_trust_region", c.body_trust_region);
    get("refine_poses", c.refine_poses);
    get("refine_beta", c.refine_beta);
    get("binding_k", c.binding_k);
    get("binding_sigma", c.binding_sigma);
    get("prior_k", c.prior_k);
    get("prior_lambda_w", c.prior_lambda_w);
    get("lambda_ssim", c.loss.lambda_ssim);
    get("lambda_rot", c.loss.lambda_rot);
    get("lambda_iso", c.loss.lambda_iso);
    get("grad_threshold", c.densify.grad_threshold);
    get("densify_interval", c.densify.densify_interval);
    get("densify_until", c.densify.densify_until);
    get("opacity_reset_interval", c.densify.opacity_reset_interval);
    get("prune_opacity", c.densify.prune_opacity);
    get("epsilon_scale_rel", c.densify.epsilon_scale_rel);
    get("split_with_scale", c.densify.split_with_scale_enabled);
    get("mlp_width", c.mlp_width);
    get("mlp_depth", c.mlp_depth);
    get("mlp_skip", c.mlp_skip);
    get("mlp_freq", c.mlp_freq);
    get("fixed_frame", c.fixed_frame);
    return c;
}

namespace {

MatX4 normalized_rows(const MatX4& rows, VecX* norms = nullptr) {
    MatX4 out(rows.rows(), 4);
    if (norms) norms->resize(rows.rows());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        double n = rows.row(i).norm();
        if (norms) (*norms)[i] = n;
        out.row(i) = rows.row(i) / n;
    }
    return out;
}

}  // namespace

Trainer::Trainer(const SceneDataset& dataset, const TrainConfig& cfg)
    : cfg_(cfg), body_(dataset.body), rng_(cfg.seed) {
    body_model_path_ = (dataset.dir / dataset.body_model_file).string();
    if (cfg_.threads > 0) ThreadPool::set_threads(cfg_.threads);
    body_.validate();
    canon_ = build_canonical_body(body_);
    background_ = dataset.background;
    beta_ = dataset.beta;

    for (size_t i = 0; i < dataset.frames.size(); ++i) {
        const FrameRecord& fr = dataset.frames[i];
        PoseState pose;
        pose.theta = fr.theta;
        pose.translation = fr.translation;
        pose.beta = beta_;
        pose.wrap_angles();
        poses_.push_back(pose);
        FramePose meta;
        meta.file = fr.file;
        meta.split = fr.split;
        meta.camera = fr.camera;
        frame_meta_.push_back(meta);
        if (fr.split == "train") {
            train_idx_.push_back(i);
            Image target = dataset.load_image(fr);
            if (auto mask = dataset.load_mask(fr)) {
                for (size_t p = 0; p < target.data.size(); ++p) {
                    double mval = mask->data[p];
                    target.data[p] = mval * target.data[p] + (1.0 - mval) * background_[p % 3];
                }
            }
            targets_.push_back(std::move(target));
        }
    }
    require(!train_idx_.empty(), "Trainer: dataset has no train frames");
    require(cfg_.fixed_frame < static_cast<int>(train_idx_.size()),
            "Trainer: fixed_frame out of range");

    // canonical Gaussians seeded at the canonical body vertices
    MatX3 v_canon = posed_vertices(body_, canon_.t_c, shaped_template(body_, beta_));
    Eigen::Index n = v_canon.rows();
    cloud_.resize(n, cfg_.sh_degree);
    cloud_.positions = v_canon;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> d2;
        d2.reserve(static_cast<size_t>(n) - 1);
        Vec3 p = v_canon.row(i);
        for (Eigen::Index k = 0; k < n; ++k)
            if (k != i) d2.push_back((v_canon.row(k).transpose() - p).squaredNorm());
        std::partial_sort(d2.begin(), d2.begin() + 3, d2.end());
        double mean = (std::sqrt(d2[0]) + std::sqrt(d2[1]) + std::sqrt(d2[2])) / 3.0;
        cloud_.log_scales.row(i).setConstant(std::log(std::max(1e-4, 0.8 * mean)));
    }
    cloud_.opacity_logits.setConstant(logit(0.1));

    mlp_.width = cfg_.mlp_width;
    mlp_.depth = cfg_.mlp_depth;
    mlp_.skip_layer = cfg_.mlp_skip;
    mlp_.n_freq = cfg_.mlp_freq;
    {
        Rng mlp_rng(cfg_.seed ^ 0x9e3779b97f4a7c15ull);
        mlp_.init(mlp_rng);
    }

    rebuild_structures();
    st_frame_.resize(train_idx_.size());
    grad_accum_ = VecX::Zero(n);
    grad_count_ = Eigen::VectorXi::Zero(n);
}

void Trainer::rebuild_structures() {
    MatX3 v_canon = posed_vertices(body_, canon_.t_c, shaped_template(body_, beta_));
    binding_ = bind(cloud_.positions, v_canon, cfg_.binding_k);
    binding_.sigma = cfg_.binding_sigma;
    graph_ = build_rigid_prior_graph(cloud_.positions, cfg_.prior_k, cfg_.prior_lambda_w);
}

struct Trainer::FrameEval {
    TotalLossParts parts;
    double total = 0.0;
    Gradients grads;
    bool with_grads = false;
};

Trainer::FrameEval Trainer::evaluate(size_t train_frame, bool with_grads, bool use_mlp) {
    require(train_frame < train_idx_.size(), "evaluate: train frame out of range");
    size_t fi = train_idx_[train_frame];
    const PoseState& pose = poses_[fi];
    const Camera& camera = frame_meta_[fi].camera;

    DeformParams p;
    p.cloud = &cloud_;
    p.mlp = use_mlp ? &mlp_ : nullptr;
    p.binding = &binding_;
    p.model = &body_;
    p.canon = &canon_;
    p.theta_t = &pose.theta;
    p.translation = pose.translation;
    p.beta = &beta_;

    DeformCache dcache;
    DeformResult def = deform(p, &dcache);

    VecX qhat_norms;
    MatX4 qhat = normalized_rows(cloud_.rotations, &qhat_norms);

    RenderInput rin;
    rin.positions = &def.x_obs;
    rin.rotations = &def.q_obs;
    rin.rotations_canonical = &qhat;
    rin.log_scales = &def.s_nr;
    rin.opacity_logits = &cloud_.opacity_logits;
    rin.sh_coeffs = &cloud_.sh_coeffs;
    rin.sh_degree = cloud_.sh_degree;
    RenderOptions ropts;
    ropts.background = background_;

    RenderCache rcache;
    RenderOutput rout = render(rin, camera, ropts, &rcache);

    const Image& target = targets_[train_frame];
    FrameEval ev;
    ev.with_grads = with_grads;

    Image d_l1, d_ssim;
    ev.parts.l1 = l1_loss(rout.image, target, with_grads ? &d_l1 : nullptr);
    ev.parts.ssim = ssim_loss(rout.image, target, with_grads ? &d_ssim : nullptr);

    Eigen::Index n = cloud_.size();
    MatX4 d_qc_rot = MatX4::Zero(n, 4), d_qo_rot = MatX4::Zero(n, 4);
    MatX3 d_xc_iso = MatX3::Zero(n, 3), d_xo_iso = MatX3::Zero(n, 3);
    ev.parts.rot = rot_loss(graph_, qhat, def.q_obs, with_grads ? &d_qc_rot : nullptr,
                            with_grads ? &d_qo_rot : nullptr);
    ev.parts.iso = iso_loss(graph_, cloud_.positions, def.x_obs, with_grads ? &d_xc_iso : nullptr,
                            with_grads ? &d_xo_iso : nullptr);
    ev.total = total_loss(ev.parts, cfg_.loss);
    if (!with_grads) return ev;

    Image d_image(rout.image.width, rout.image.height);
    for (size_t i = 0; i < d_image.data.size(); ++i)
        d_image.data[i] = d_l1.data[i] + cfg_.loss.lambda_ssim * d_ssim.data[i];

    RenderGrads rg = render_backward(rin, camera, ropts, rcache, d_image);

    MatX3 d_x_obs = rg.d_positions + cfg_.loss.lambda_iso * d_xo_iso;
    MatX4 d_q_obs = rg.d_rotations + cfg_.loss.lambda_rot * d_qo_rot;
    DeformGrads dg = deform_backward(p, def, dcache, d_x_obs, d_q_obs, rg.d_log_scales);

    Gradients& g = ev.grads;
    g.d_positions = dg.d_positions + cfg_.loss.lambda_iso * d_xc_iso;
    g.d_rotations = dg.d_rotations;
    MatX4 d_qhat = rg.d_rotations_canonical + cfg_.loss.lambda_rot * d_qc_rot;
    for (Eigen::Index i = 0; i < n; ++i) {
        Quat q{qhat(i, 0), qhat(i, 1), qhat(i, 2), qhat(i, 3)};
        g.d_rotations.row(i) +=
            normalize_backward(q, qhat_norms[i], d_qhat.row(i).transpose()).transpose();
    }
    g.d_log_scales = dg.d_log_scales;
    g.d_opacity = rg.d_opacity_logits;
    g.d_sh = rg.d_sh_coeffs;
    g.has_mlp = dg.has_mlp;
    if (dg.has_mlp) g.d_mlp = std::move(dg.d_mlp);
    g.d_theta = dg.d_theta;
    g.d_translation = dg.d_translation;
    g.d_beta = dg.d_beta;
    g.grad2d_norm = rg.grad2d_norm;
    g.visible.resize(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) g.visible[static_cast<size_t>(i)] = rcache.proj[static_cast<size_t>(i)].valid;
    g.parts = ev.parts;
    g.total = ev.total;
    return ev;
}

Trainer::Gradients Trainer::compute_gradients(size_t train_frame, bool force_mlp) {
    bool use_mlp = force_mlp || step_count_ >= static_cast<int>(cfg_.warmup_frac * cfg_.total_steps);
    FrameEval ev = evaluate(train_frame, true, use_mlp);
    return std::move(ev.grads);
}

double Trainer::frame_loss(size_t train_frame, bool force_mlp, TotalLossParts* parts) {
    bool use_mlp = force_mlp || step_count_ >= static_cast<int>(cfg_.warmup_frac * cfg_.total_steps);
    FrameEval ev = evaluate(train_frame, false, use_mlp);
    if (parts) *parts = ev.parts;
    return ev.total;
}

Image Trainer::render_train_frame(size_t train_frame) {
    require(train_frame < train_idx_.size(), "render_train_frame: out of range");
    size_t fi = train_idx_[train_frame];
    AvatarModel view;  // assembled on the fly from the live state
    view.body = body_;
    view.canon = canon_;
    view.cloud = cloud_;
    view.mlp = mlp_;
    view.use_mlp = step_count_ >= static_cast<int>(cfg_.warmup_frac * cfg_.total_steps);
    view.binding = binding_;
    view.beta = beta_;
    return view.render_pose(poses_[fi].theta, poses_[fi].translation, frame_meta_[fi].camera,
                            background_);
}

Trainer::StepInfo Trainer::step() {
    int t = step_count_;
    size_t frame = cfg_.fixed_frame >= 0 ? static_cast<size_t>(cfg_.fixed_frame)
                                         : static_cast<size_t>(rng_.uniform_int(train_idx_.size()));
    bool mlp_active = t >= static_cast<int>(cfg_.warmup_frac * cfg_.total_steps);

    FrameEval ev = evaluate(frame, true, mlp_active);
    if (!std::isfinite(ev.total)) {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "non-finite loss at step %d (frame %zu): l1=%g ssim=%g rot=%g iso=%g", t,
                      frame, ev.parts.l1, ev.parts.ssim, ev.parts.rot, ev.parts.iso);
        throw std::runtime_error(buf);
    }
    Gradients& g = ev.grads;

    double decay = static_cast<double>(t) / std::max(1, cfg_.total_steps);
    double lr_pos = cfg_.lr_position * std::pow(cfg_.lr_position_final / cfg_.lr_position, decay);

    auto flat = [](auto& m) { return Eigen::Map<VecX>(m.data(), m.size()); };
    auto flat_c = [](const auto& m) { return Eigen::Map<const VecX>(m.data(), m.size()); };

    if (!adam_step(st_positions_, flat(cloud_.positions), flat_c(g.d_positions), lr_pos))
        ++nonfinite_skips_;
    if (!adam_step(st_rotations_, flat(cloud_.rotations), flat_c(g.d_rotations), cfg_.lr_rotation))
        ++nonfinite_skips_;
    for (Eigen::Index i = 0; i < cloud_.size(); ++i)
        cloud_.rotations.row(i) /= cloud_.rotations.row(i).norm();
    if (!adam_step(st_scales_, flat(cloud_.log_scales), flat_c(g.d_log_scales), cfg_.lr_scale))
        ++nonfinite_skips_;
    if (!adam_step(st_opacity_, cloud_.opacity_logits, g.d_opacity, cfg_.lr_opacity))
        ++nonfinite_skips_;
    if (!adam_step(st_sh_, flat(cloud_.sh_coeffs), flat_c(g.d_sh), cfg_.lr_sh)) ++nonfinite_skips_;

    if (mlp_active && g.has_mlp) {
        VecX params, grads;
        mlp_.to_flat(params);
        NonRigidMlp::grads_to_flat(g.d_mlp, grads);
        if (!adam_step(st_mlp_, params, grads, cfg_.lr_mlp))
            ++nonfinite_skips_;
        else
            mlp_.from_flat(params);
    }

    if (cfg_.refine_poses) {
        size_t fi = train_idx_[frame];
        VecX params(body_.joint_count() * 3 + 3), grads(params.size());
        params << flat_c(poses_[fi].theta), poses_[fi].translation;
        grads << flat_c(g.d_theta), g.d_translation;
        if (!adam_step(st_frame_[frame], params, grads, cfg_.lr_body, {}, cfg_.body_trust_region)) {
            ++nonfinite_skips_;
        } else {
            flat(poses_[fi].theta) = params.head(body_.joint_count() * 3);
            poses_[fi].translation = params.tail(3);
            poses_[fi].wrap_angles();
        }
    }
    if (cfg_.refine_beta && beta_.size() > 0) {
        if (!adam_step(st_beta_, beta_, g.d_beta, cfg_.lr_body, {}, cfg_.body_trust_region))
            ++nonfinite_skips_;
    }

    // densification bookkeeping
    for (Eigen::Index i = 0; i < cloud_.size(); ++i) {
        if (!g.visible[static_cast<size_t>(i)]) continue;
        grad_accum_[i] += g.grad2d_norm[i];
        grad_count_[i] += 1;
    }
    ++step_count_;

    if (step_count_ % cfg_.densify.densify_interval == 0 && step_count_ <= cfg_.densify.densify_until) {
        double extent = cloud_.bbox_diagonal();
        CloudUpdate up = densify_and_prune(cloud_, grad_accum_, grad_count_, cfg_.densify, extent, rng_);
        apply_cloud_update(up);
        if (cfg_.densify.split_with_scale_enabled) {
            CloudUpdate sws = split_with_scale(cloud_, cfg_.densify.epsilon_scale_rel * extent);
            apply_cloud_update(sws);
        }
        rebuild_structures();
    }
    if (cfg_.densify.opacity_reset_interval > 0 &&
        step_count_ % cfg_.densify.opacity_reset_interval == 0 &&
        step_count_ <= cfg_.densify.densify_until) {
        reset_opacity(cloud_);
        st_opacity_.init(cloud_.size());
    }

    StepInfo info;
    info.step = t;
    info.frame = frame;
    info.parts = ev.parts;
    info.total = ev.total;
    return info;
}

void Trainer::apply_cloud_update(const CloudUpdate& update) {
    cloud_ = update.cloud;
    remap_adam_state(st_positions_, update.src_index, 3);
    remap_adam_state(st_rotations_, update.src_index, 4);
    remap_adam_state(st_scales_, update.src_index, 3);
    remap_adam_state(st_opacity_, update.src_index, 1);
    remap_adam_state(st_sh_, update.src_index, 3 * cloud_.sh_dim());
    grad_accum_ = VecX::Zero(cloud_.size());
    grad_count_ = Eigen::VectorXi::Zero(cloud_.size());
}

void Trainer::run(const std::function<void(const StepInfo&)>& on_log) {
    for (int t = 0; t < cfg_.total_steps; ++t) {
        StepInfo info = step();
        if (!cfg_.quiet && cfg_.log_interval > 0 &&
            (info.step % cfg_.log_interval == 0 || info.step + 1 == cfg_.total_steps)) {
            std::printf("step %5d  frame %3zu  N %6ld  loss %.6f (l1 %.6f ssim %.6f rot %.6f iso %.6f)\n",
                        info.step, info.frame, static_cast<long>(cloud_.size()), info.total,
                        info.parts.l1, info.parts.ssim, info.parts.rot, info.parts.iso);
            std::fflush(stdout);
        }
        if (on_log) on_log(info);
    }
}

Checkpoint Trainer::make_checkpoint() const {
    Checkpoint ckpt;
    ckpt.body_model_path = body_model_path_;
    ckpt.body_model = body_to_json(body_);
    ckpt.cloud = cloud_;
    ckpt.mlp = mlp_;
    ckpt.beta = beta_;
    ckpt.config = train_config_to_json(cfg_);
    for (size_t i = 0; i < frame_meta_.size(); ++i) {
        FramePose fp = frame_meta_[i];
        fp.theta = poses_[i].theta;
        fp.translation = poses_[i].translation;
        ckpt.frames.push_back(std::move(fp));
    }
    return ckpt;
}

}  // namespace gsa
