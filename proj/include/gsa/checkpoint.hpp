#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "gsa/body.hpp"
#include "gsa/camera.hpp"
#include "gsa/cloud.hpp"
#include "gsa/mlp.hpp"

namespace gsa {

struct FramePose {
    std::string file;
    std::string split = "train";
    MatX3 theta;
    Vec3 translation = Vec3::Zero();
    Camera camera;
};

// Trained model archive: versioned header + JSON metadata + raw little-endian
// double arrays. The body model is embedded so checkpoints are self-contained;
// the original path is kept as a reference.
struct Checkpoint {
    int version = 1;
    std::string body_model_path;
    nlohmann::json body_model;
    GaussianCloud cloud;
    NonRigidMlp mlp;
    std::vector<FramePose> frames;
    VecX beta;
    nlohmann::json config;  // training configuration echo

    BodyModel body() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j, const std::string& context);

}  // namespace gsa
