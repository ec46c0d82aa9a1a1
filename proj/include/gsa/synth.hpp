#pragma once

#include <filesystem>

#include "gsa/body.hpp"
#include "gsa/checkpoint.hpp"
#include "gsa/cloud.hpp"
#include "gsa/dataset.hpp"

namespace gsa {

// Procedural tube-limb humanoid, ~16 joints, ~1k vertices, distance-based
// softmax skinning weights, two shape blendshapes (stretch, widen). The
// template is built directly in the star pose, so theta_canonical is zero.
BodyModel make_humanoid();

// Ground-truth Gaussian cloud for the humanoid: one Gaussian per vertex,
// coloured by dominant joint with per-Gaussian jitter.
GaussianCloud make_teacher_cloud(const BodyModel& model, uint64_t seed);

struct SynthOptions {
    uint64_t seed = 1;
    int train_frames = 20;
    int test_frames = 4;
    int resolution = 64;
    Vec3 background = Vec3(0.06, 0.06, 0.08);
};

// Smooth pose trajectory sample; t in [0,1). Novel poses use a different
// phase/amplitude family; `style_phase` varies the whole trajectory per seed.
void sample_pose(const BodyModel& model, double t, bool novel, double style_phase, MatX3& theta,
                 Vec3& translation);

struct SynthResult {
    std::filesystem::path dataset_dir;
    std::filesystem::path teacher_checkpoint;
};

// Renders ground-truth frames with the teacher cloud (zero non-rigid field)
// and writes the dataset plus the teacher checkpoint.
SynthResult synth_dataset(const std::filesystem::path& out_dir, const SynthOptions& opts);

}  // namespace gsa
