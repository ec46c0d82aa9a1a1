#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gsa/checkpoint.hpp"
#include "gsa/dataset.hpp"

namespace gsa {

struct FrameMetrics {
    std::string file;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::string split;
    std::vector<FrameMetrics> frames;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

// Renders each frame of the split with the checkpoint's poses and compares
// against the dataset images. Renders are quantized to 8 bits first so a
// ground-truth checkpoint scores an exact +inf PSNR against its own frames.
EvalReport evaluate(const Checkpoint& ckpt, const SceneDataset& dataset, const std::string& split);

void write_report(const std::filesystem::path& path, const EvalReport& report);
void print_report(const EvalReport& report);

}  // namespace gsa
