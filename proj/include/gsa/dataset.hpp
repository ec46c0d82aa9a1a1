#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gsa/body.hpp"
#include "gsa/camera.hpp"
#include "gsa/image.hpp"

namespace gsa {

struct FrameRecord {
    std::string file;   // relative to the dataset directory
    std::string split;  // "train" or "test"
    MatX3 theta;
    Vec3 translation = Vec3::Zero();
    Camera camera;
    std::optional<std::string> mask;
};

struct SceneDataset {
    std::filesystem::path dir;
    int width = 0, height = 0;
    Vec3 background = Vec3::Zero();
    std::string body_model_file;
    BodyModel body;
    VecX beta;
    std::vector<FrameRecord> frames;

    std::vector<size_t> split_indices(const std::string& split) const;
    Image load_image(const FrameRecord& frame) const;
    std::optional<Image> load_mask(const FrameRecord& frame) const;
};

// Parses and schema-validates manifest.json; checks that every frame image
// exists with the declared resolution.
SceneDataset load_dataset(const std::filesystem::path& dir);

}  // namespace gsa
