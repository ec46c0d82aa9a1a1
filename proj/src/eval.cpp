#include "gsa/eval.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "gsa/avatar.hpp"
#include "gsa/fsutil.hpp"
#include "gsa/losses.hpp"

namespace gsa {

using nlohmann::json;

EvalReport evaluate(const Checkpoint& ckpt, const SceneDataset& dataset, const std::string& split) {
    require(split == "train" || split == "test", "evaluate: split must be train|test");
    AvatarModel avatar = AvatarModel::from_checkpoint(ckpt);

    EvalReport report;
    report.split = split;
    double sum_psnr = 0.0, sum_ssim = 0.0;
    for (size_t i = 0; i < dataset.frames.size(); ++i) {
        const FrameRecord& fr = dataset.frames[i];
        if (fr.split != split) continue;
        require(i < ckpt.frames.size() && ckpt.frames[i].file == fr.file,
                "evaluate: checkpoint frames do not line up with the dataset (frame " +
                    std::to_string(i) + ")");
        const FramePose& fp = ckpt.frames[i];
        Image rendered =
            avatar.render_pose(fp.theta, fp.translation, fp.camera, dataset.background);
        quantize_in_place(rendered);
        Image target = dataset.load_image(fr);
        FrameMetrics m;
        m.file = fr.file;
        m.psnr = psnr(rendered, target);
        m.ssim = ssim_metric(rendered, target);
        sum_psnr += m.psnr;
        sum_ssim += m.ssim;
        report.frames.push_back(std::move(m));
    }
    require(!report.frames.empty(), "evaluate: no frames in split '" + split + "'");
    report.mean_psnr = sum_psnr / report.frames.size();
    report.mean_ssim = sum_ssim / report.frames.size();
    return report;
}

namespace {
json psnr_value(double v) {
    if (std::isinf(v)) return "+inf";
    return v;
}
}  // namespace

void write_report(const std::filesystem::path& path, const EvalReport& report) {
    json j;
    j["split"] = report.split;
    json frames = json::array();
    for (const auto& m : report.frames)
        frames.push_back({{"file", m.file}, {"psnr", psnr_value(m.psnr)}, {"ssim", m.ssim}});
    j["frames"] = std::move(frames);
    j["mean_psnr"] = psnr_value(report.mean_psnr);
    j["mean_ssim"] = report.mean_ssim;
    atomic_write_file(path, j.dump(2));
}

void print_report(const EvalReport& report) {
    std::printf("%-28s %10s %8s\n", ("frame (" + report.split + ")").c_str(), "PSNR", "SSIM");
    for (const auto& m : report.frames)
        std::printf("%-28s %10.3f %8.4f\n", m.file.c_str(), m.psnr, m.ssim);
    std::printf("%-28s %10.3f %8.4f\n", "mean", report.mean_psnr, report.mean_ssim);
}

}  // namespace gsa
