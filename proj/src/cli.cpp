#include "gsa/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>

#include "gsa/avatar.hpp"
#include "gsa/eval.hpp"
#include "gsa/fsutil.hpp"
#include "gsa/ply.hpp"
#include "gsa/png_io.hpp"
#include "gsa/synth.hpp"
#include "gsa/train.hpp"

namespace gsa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainArgs {
    std::string dataset_dir;
    std::string out_dir;
    std::string config_file;
    int steps = -1;
    int64_t seed = -1;
    int threads = -1;
    double lambda_rot = -1.0, lambda_iso = -1.0;
    int split_with_scale = -1;  // tri-state override
    int refine_poses = -1;
    int quiet = 0;
};

TrainConfig resolve_train_config(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config_file.empty()) {
        json j = json::parse(read_file(a.config_file));
        cfg = train_config_from_json(j);
    }
    if (a.steps >= 0) cfg.total_steps = a.steps;
    if (a.seed >= 0) cfg.seed = static_cast<uint64_t>(a.seed);
    if (a.threads >= 0) cfg.threads = a.threads;
    if (a.lambda_rot >= 0.0) cfg.loss.lambda_rot = a.lambda_rot;
    if (a.lambda_iso >= 0.0) cfg.loss.lambda_iso = a.lambda_iso;
    if (a.split_with_scale >= 0) cfg.densify.split_with_scale_enabled = a.split_with_scale != 0;
    if (a.refine_poses >= 0) cfg.refine_poses = a.refine_poses != 0;
    cfg.quiet = a.quiet != 0;
    return cfg;
}

void load_pose_sequence(const fs::path& path, Eigen::Index joint_count,
                        std::vector<std::pair<MatX3, Vec3>>& out) {
    json j = json::parse(read_file(path));
    require(j.is_array() && !j.empty(), "pose sequence: root must be a non-empty array");
    for (size_t i = 0; i < j.size(); ++i) {
        const json& jp = j[i];
        std::string ctx = "pose sequence [" + std::to_string(i) + "]";
        require(jp.is_object() && jp.contains("theta"), ctx + ": missing 'theta'");
        const json& th = jp["theta"];
        require(th.is_array() && static_cast<Eigen::Index>(th.size()) == joint_count * 3,
                ctx + ": 'theta' must have " + std::to_string(joint_count * 3) + " entries");
        MatX3 theta(joint_count, 3);
        for (Eigen::Index t = 0; t < joint_count * 3; ++t)
            theta(t / 3, t % 3) = th[static_cast<size_t>(t)].get<double>();
        Vec3 trans = Vec3::Zero();
        if (jp.contains("translation")) {
            const json& tr = jp["translation"];
            require(tr.is_array() && tr.size() == 3, ctx + ": 'translation' must have 3 entries");
            for (int c = 0; c < 3; ++c) trans[c] = tr[static_cast<size_t>(c)].get<double>();
        }
        out.push_back({std::move(theta), trans});
    }
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Pose-driven Gaussian avatar reconstruction"};
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scene with a known ground truth");
    std::string synth_out;
    SynthOptions synth_opts;
    int64_t synth_seed = 1;
    int synth_res = 64;
    synth_cmd->add_option("out_dir", synth_out, "output dataset directory")->required();
    synth_cmd->add_option("--seed", synth_seed, "generator seed");
    synth_cmd->add_option("--frames", synth_opts.train_frames, "number of training frames");
    synth_cmd->add_option("--test-frames", synth_opts.test_frames, "number of held-out novel-pose frames");
    synth_cmd->add_option("--resolution", synth_res, "frame resolution (square)");

    // train
    auto* train_cmd = app.add_subcommand("train", "Optimize an avatar on a scene dataset");
    TrainArgs targs;
    train_cmd->add_option("dataset_dir", targs.dataset_dir, "scene dataset directory")->required();
    train_cmd->add_option("out_dir", targs.out_dir, "output directory for the checkpoint")->required();
    train_cmd->add_option("--config", targs.config_file, "JSON config file (flags override it)");
    train_cmd->add_option("--steps", targs.steps, "optimization steps");
    train_cmd->add_option("--seed", targs.seed, "training seed");
    train_cmd->add_option("--threads", targs.threads, "worker threads (0 = all cores)");
    train_cmd->add_option("--lambda-rot", targs.lambda_rot, "rotation prior weight");
    train_cmd->add_option("--lambda-iso", targs.lambda_iso, "isometry prior weight");
    train_cmd->add_option("--split-with-scale", targs.split_with_scale, "enable split-with-scale (0/1)");
    train_cmd->add_option("--refine-poses", targs.refine_poses, "jointly optimize body poses (0/1)");
    train_cmd->add_flag("--quiet", targs.quiet, "suppress progress logging");

    // render
    auto* render_cmd = app.add_subcommand("render", "Render one checkpoint frame to PNG");
    std::string render_ckpt, render_out = "render.png";
    int render_frame = 0;
    render_cmd->add_option("checkpoint", render_ckpt, "checkpoint file or directory")->required();
    render_cmd->add_option("--frame", render_frame, "frame index");
    render_cmd->add_option("--out", render_out, "output PNG path");

    // animate
    auto* anim_cmd = app.add_subcommand("animate", "Render a novel pose sequence");
    std::string anim_ckpt, anim_poses, anim_out;
    int anim_camera_frame = 0;
    anim_cmd->add_option("checkpoint", anim_ckpt, "checkpoint file or directory")->required();
    anim_cmd->add_option("poses", anim_poses, "pose sequence JSON")->required();
    anim_cmd->add_option("out_dir", anim_out, "output directory")->required();
    anim_cmd->add_option("--camera-frame", anim_camera_frame, "checkpoint frame whose camera is used");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM report of a checkpoint against a dataset");
    std::string eval_ckpt, eval_dataset, eval_split = "train", eval_out;
    eval_cmd->add_option("checkpoint", eval_ckpt, "checkpoint file or directory")->required();
    eval_cmd->add_option("dataset_dir", eval_dataset, "scene dataset directory")->required();
    eval_cmd->add_option("--split", eval_split, "train or test")
        ->check(CLI::IsMember({"train", "test"}));
    eval_cmd->add_option("--out", eval_out, "report JSON path (default <dataset>/report.json)");

    // export-ply
    auto* ply_cmd = app.add_subcommand("export-ply", "Export the Gaussian cloud as binary PLY");
    std::string ply_ckpt, ply_out;
    int ply_pose_frame = -1;
    ply_cmd->add_option("checkpoint", ply_ckpt, "checkpoint file or directory")->required();
    ply_cmd->add_option("out", ply_out, "output PLY path")->required();
    ply_cmd->add_option("--pose-frame", ply_pose_frame,
                        "export the cloud deformed to this frame's pose (default canonical)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    auto resolve_ckpt = [](const std::string& p) -> fs::path {
        fs::path path(p);
        if (fs::is_directory(path)) path /= "checkpoint.ckpt";
        return path;
    };

    try {
        if (synth_cmd->parsed()) {
            synth_opts.seed = static_cast<uint64_t>(synth_seed);
            synth_opts.resolution = synth_res;
            SynthResult res = synth_dataset(synth_out, synth_opts);
            std::printf("dataset: %s\nteacher checkpoint: %s\n", res.dataset_dir.c_str(),
                        res.teacher_checkpoint.c_str());
        } else if (train_cmd->parsed()) {
            TrainConfig cfg = resolve_train_config(targs);
            SceneDataset dataset = load_dataset(targs.dataset_dir);
            Trainer trainer(dataset, cfg);
            trainer.run();
            fs::path out = fs::path(targs.out_dir) / "checkpoint.ckpt";
            save_checkpoint(out, trainer.make_checkpoint());
            std::printf("checkpoint: %s\n", out.c_str());
        } else if (render_cmd->parsed()) {
            Checkpoint ckpt = load_checkpoint(resolve_ckpt(render_ckpt));
            require(render_frame >= 0 && render_frame < static_cast<int>(ckpt.frames.size()),
                    "render: frame index out of range");
            const FramePose& fp = ckpt.frames[static_cast<size_t>(render_frame)];
            AvatarModel avatar = AvatarModel::from_checkpoint(ckpt);
            Vec3 bg = Vec3::Zero();
            Image img = avatar.render_pose(fp.theta, fp.translation, fp.camera, bg);
            write_png(render_out, img);
            std::printf("wrote %s (%dx%d)\n", render_out.c_str(), img.width, img.height);
        } else if (anim_cmd->parsed()) {
            Checkpoint ckpt = load_checkpoint(resolve_ckpt(anim_ckpt));
            require(!ckpt.frames.empty(), "animate: checkpoint has no camera frames");
            require(anim_camera_frame >= 0 && anim_camera_frame < static_cast<int>(ckpt.frames.size()),
                    "animate: camera frame out of range");
            AvatarModel avatar = AvatarModel::from_checkpoint(ckpt);
            std::vector<std::pair<MatX3, Vec3>> seq;
            load_pose_sequence(anim_poses, avatar.body.joint_count(), seq);
            const Camera& cam = ckpt.frames[static_cast<size_t>(anim_camera_frame)].camera;
            fs::create_directories(anim_out);
            for (size_t i = 0; i < seq.size(); ++i) {
                Image img = avatar.render_pose(seq[i].first, seq[i].second, cam, Vec3::Zero());
                char name[64];
                std::snprintf(name, sizeof(name), "pose_%04zu.png", i);
                write_png(fs::path(anim_out) / name, img);
            }
            std::printf("wrote %zu frames to %s\n", seq.size(), anim_out.c_str());
        } else if (eval_cmd->parsed()) {
            Checkpoint ckpt = load_checkpoint(resolve_ckpt(eval_ckpt));
            SceneDataset dataset = load_dataset(eval_dataset);
            EvalReport report = evaluate(ckpt, dataset, eval_split);
            print_report(report);
            fs::path out = eval_out.empty() ? fs::path(eval_dataset) / "report.json" : fs::path(eval_out);
            write_report(out, report);
            std::printf("report: %s\n", out.c_str());
        } else if (ply_cmd->parsed()) {
            Checkpoint ckpt = load_checkpoint(resolve_ckpt(ply_ckpt));
            if (ply_pose_frame < 0) {
                export_ply(ply_out, ckpt.cloud);
            } else {
                require(ply_pose_frame < static_cast<int>(ckpt.frames.size()),
                        "export-ply: pose frame out of range");
                AvatarModel avatar = AvatarModel::from_checkpoint(ckpt);
                const FramePose& fp = ckpt.frames[static_cast<size_t>(ply_pose_frame)];
                DeformResult def = avatar.pose(fp.theta, fp.translation);
                GaussianCloud posed = ckpt.cloud;
                posed.positions = def.x_obs;
                posed.rotations = def.q_obs;
                posed.log_scales = def.s_nr;
                export_ply(ply_out, posed);
            }
            std::printf("wrote %s\n", ply_out.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace gsa
