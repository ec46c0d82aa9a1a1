#include "gsa/dataset.hpp"

#include <json.hpp>

#include "gsa/body_io.hpp"
#include "gsa/checkpoint.hpp"
#include "gsa/fsutil.hpp"
#include "gsa/png_io.hpp"

namespace gsa {

using nlohmann::json;

std::vector<size_t> SceneDataset::split_indices(const std::string& split) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < frames.size(); ++i)
        if (frames[i].split == split) out.push_back(i);
    return out;
}

Image SceneDataset::load_image(const FrameRecord& frame) const { return read_png(dir / frame.file); }

std::optional<Image> SceneDataset::load_mask(const FrameRecord& frame) const {
    if (!frame.mask) return std::nullopt;
    return read_png(dir / *frame.mask);
}

SceneDataset load_dataset(const std::filesystem::path& dir) {
    std::filesystem::path manifest_path = dir / "manifest.json";
    json j;
    try {
        j = json::parse(read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw std::runtime_error("manifest " + manifest_path.string() + ": " + e.what());
    }
    require(j.is_object(), "manifest: root must be an object");
    require(j.value("format", "") == "gsavatar-scene", "manifest: unknown 'format'");
    for (const char* f : {"width", "height", "body_model", "beta", "frames"})
        require(j.contains(f), std::string("manifest: missing '") + f + "'");

    SceneDataset ds;
    ds.dir = dir;
    ds.width = j["width"].get<int>();
    ds.height = j["height"].get<int>();
    require(ds.width >= 1 && ds.height >= 1, "manifest: invalid resolution");
    if (j.contains("background")) {
        const json& bg = j["background"];
        require(bg.is_array() && bg.size() == 3, "manifest: 'background' must have 3 entries");
        for (int c = 0; c < 3; ++c) ds.background[c] = bg[static_cast<size_t>(c)].get<double>();
    }
    ds.body_model_file = j["body_model"].get<std::string>();
    ds.body = load_body_model(dir / ds.body_model_file);

    const json& beta = j["beta"];
    require(beta.is_array(), "manifest: 'beta' must be an array");
    require(static_cast<int>(beta.size()) == ds.body.shape_count(),
            "manifest: 'beta' length does not match the body model's shape_dirs");
    ds.beta.resize(static_cast<Eigen::Index>(beta.size()));
    for (size_t s = 0; s < beta.size(); ++s) ds.beta[static_cast<Eigen::Index>(s)] = beta[s].get<double>();

    Eigen::Index j_count = ds.body.joint_count();
    const json& frames = j["frames"];
    require(frames.is_array() && !frames.empty(), "manifest: 'frames' must be a non-empty array");
    for (size_t fi = 0; fi < frames.size(); ++fi) {
        std::string ctx = "manifest: frames[" + std::to_string(fi) + "]";
        const json& jf = frames[fi];
        require(jf.is_object(), ctx + " must be an object");
        for (const char* f : {"file", "theta", "translation", "camera"})
            require(jf.contains(f), ctx + " missing '" + f + "'");
        FrameRecord rec;
        rec.file = jf["file"].get<std::string>();
        rec.split = jf.value("split", "train");
        require(rec.split == "train" || rec.split == "test", ctx + ": split must be train|test");

        const json& theta = jf["theta"];
        require(theta.is_array() && static_cast<Eigen::Index>(theta.size()) == j_count * 3,
                ctx + ": 'theta' must have 3*J = " + std::to_string(j_count * 3) + " entries");
        rec.theta.resize(j_count, 3);
        for (Eigen::Index t = 0; t < j_count * 3; ++t)
            rec.theta(t / 3, t % 3) = theta[static_cast<size_t>(t)].get<double>();

        const json& trans = jf["translation"];
        require(trans.is_array() && trans.size() == 3, ctx + ": 'translation' must have 3 entries");
        for (int c = 0; c < 3; ++c) rec.translation[c] = trans[static_cast<size_t>(c)].get<double>();

        rec.camera = camera_from_json(jf["camera"], ctx);
        require(rec.camera.width == ds.width && rec.camera.height == ds.height,
                ctx + ": camera resolution differs from the dataset resolution");

        if (jf.contains("mask")) rec.mask = jf["mask"].get<std::string>();

        require(std::filesystem::exists(dir / rec.file), ctx + ": image file missing: " + rec.file);
        Image img = read_png(dir / rec.file);
        require(img.width == ds.width && img.height == ds.height,
                ctx + ": image " + rec.file + " is " + std::to_string(img.width) + "x" +
                    std::to_string(img.height) + ", expected " + std::to_string(ds.width) + "x" +
                    std::to_string(ds.height));
        if (rec.mask)
            require(std::filesystem::exists(dir / *rec.mask), ctx + ": mask file missing: " + *rec.mask);

        ds.frames.push_back(std::move(rec));
    }
    return ds;
}

}  // namespace gsa
