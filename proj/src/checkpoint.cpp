#include "gsa/checkpoint.hpp"

#include <cstring>

#include "gsa/body_io.hpp"
#include "gsa/fsutil.hpp"

namespace gsa {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'G', 'S', 'A', 'V', 'C', 'K', 'P', 'T'};

void append_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t read_u64(const std::string& in, size_t& pos) {
    require(pos + 8 <= in.size(), "checkpoint: truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(in[pos + i])) << (8 * i);
    pos += 8;
    return v;
}

void append_doubles(std::string& out, const double* data, size_t count) {
    static_assert(sizeof(double) == 8);
    append_u64(out, count);
    size_t off = out.size();
    out.resize(off + count * 8);
    std::memcpy(out.data() + off, data, count * 8);
}

void read_doubles(const std::string& in, size_t& pos, double* data, size_t expected) {
    uint64_t count = read_u64(in, pos);
    require(count == expected, "checkpoint: array size mismatch");
    require(pos + count * 8 <= in.size(), "checkpoint: truncated array");
    std::memcpy(data, in.data() + pos, count * 8);
    pos += count * 8;
}

}  // namespace

json camera_to_json(const Camera& cam) {
    json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["near"] = cam.near;
    j["far"] = cam.far;
    std::vector<double> r(9);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) r[static_cast<size_t>(a * 3 + b)] = cam.world_to_camera.R(a, b);
    j["r"] = r;
    j["t"] = {cam.world_to_camera.t.x(), cam.world_to_camera.t.y(), cam.world_to_camera.t.z()};
    return j;
}

Camera camera_from_json(const json& j, const std::string& context) {
    require(j.is_object(), context + ": camera must be an object");
    for (const char* f : {"fx", "fy", "cx", "cy", "width", "height", "r", "t"})
        require(j.contains(f), context + ": camera missing '" + f + "'");
    Camera cam;
    cam.fx = j["fx"].get<double>();
    cam.fy = j["fy"].get<double>();
    cam.cx = j["cx"].get<double>();
    cam.cy = j["cy"].get<double>();
    cam.width = j["width"].get<int>();
    cam.height = j["height"].get<int>();
    cam.near = j.value("near", 0.05);
    cam.far = j.value("far", 100.0);
    const json& r = j["r"];
    const json& t = j["t"];
    require(r.is_array() && r.size() == 9, context + ": camera 'r' must have 9 entries");
    require(t.is_array() && t.size() == 3, context + ": camera 't' must have 3 entries");
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) cam.world_to_camera.R(a, b) = r[static_cast<size_t>(a * 3 + b)].get<double>();
    for (int a = 0; a < 3; ++a) cam.world_to_camera.t[a] = t[static_cast<size_t>(a)].get<double>();
    cam.validate();
    require(cam.world_to_camera.is_valid(1e-4), context + ": camera rotation not orthonormal");
    return cam;
}

BodyModel Checkpoint::body() const { return body_from_json(body_model); }

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json meta;
    meta["version"] = ckpt.version;
    meta["body_model_path"] = ckpt.body_model_path;
    meta["body_model"] = ckpt.body_model;
    meta["config"] = ckpt.config;
    meta["n_gaussians"] = ckpt.cloud.size();
    meta["sh_degree"] = ckpt.cloud.sh_degree;
    meta["mlp"] = {{"width", ckpt.mlp.width},
                   {"depth", ckpt.mlp.depth},
                   {"skip_layer", ckpt.mlp.skip_layer},
                   {"n_freq", ckpt.mlp.n_freq}};
    json frames = json::array();
    for (const auto& f : ckpt.frames) {
        json jf;
        jf["file"] = f.file;
        jf["split"] = f.split;
        jf["camera"] = camera_to_json(f.camera);
        jf["joints"] = f.theta.rows();
        frames.push_back(std::move(jf));
    }
    meta["frames"] = std::move(frames);
    meta["beta_size"] = ckpt.beta.size();

    std::string out;
    out.append(kMagic, 8);
    std::string meta_str = meta.dump();
    append_u64(out, meta_str.size());
    out += meta_str;

    const GaussianCloud& c = ckpt.cloud;
    append_doubles(out, c.positions.data(), static_cast<size_t>(c.positions.size()));
    append_doubles(out, c.rotations.data(), static_cast<size_t>(c.rotations.size()));
    append_doubles(out, c.log_scales.data(), static_cast<size_t>(c.log_scales.size()));
    append_doubles(out, c.opacity_logits.data(), static_cast<size_t>(c.opacity_logits.size()));
    append_doubles(out, c.sh_coeffs.data(), static_cast<size_t>(c.sh_coeffs.size()));

    VecX mlp_flat;
    ckpt.mlp.to_flat(mlp_flat);
    append_doubles(out, mlp_flat.data(), static_cast<size_t>(mlp_flat.size()));

    append_doubles(out, ckpt.beta.data(), static_cast<size_t>(ckpt.beta.size()));
    for (const auto& f : ckpt.frames) {
        append_doubles(out, f.theta.data(), static_cast<size_t>(f.theta.size()));
        append_doubles(out, f.translation.data(), 3);
    }
    atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::string in = read_file(path);
    require(in.size() > 16 && std::memcmp(in.data(), kMagic, 8) == 0,
            "checkpoint " + path.string() + ": bad magic");
    size_t pos = 8;
    uint64_t meta_len = read_u64(in, pos);
    require(pos + meta_len <= in.size(), "checkpoint: truncated metadata");
    json meta = json::parse(in.substr(pos, meta_len));
    pos += meta_len;

    Checkpoint ckpt;
    ckpt.version = meta.at("version").get<int>();
    require(ckpt.version == 1, "checkpoint: unsupported version");
    ckpt.body_model_path = meta.value("body_model_path", "");
    ckpt.body_model = meta.at("body_model");
    ckpt.config = meta.value("config", json::object());

    Eigen::Index n = meta.at("n_gaussians").get<Eigen::Index>();
    int degree = meta.at("sh_degree").get<int>();
    ckpt.cloud.resize(n, degree);
    read_doubles(in, pos, ckpt.cloud.positions.data(), static_cast<size_t>(n) * 3);
    read_doubles(in, pos, ckpt.cloud.rotations.data(), static_cast<size_t>(n) * 4);
    read_doubles(in, pos, ckpt.cloud.log_scales.data(), static_cast<size_t>(n) * 3);
    read_doubles(in, pos, ckpt.cloud.opacity_logits.data(), static_cast<size_t>(n));
    read_doubles(in, pos, ckpt.cloud.sh_coeffs.data(),
                 static_cast<size_t>(ckpt.cloud.sh_coeffs.size()));

    const json& jm = meta.at("mlp");
    ckpt.mlp.width = jm.at("width").get<int>();
    ckpt.mlp.depth = jm.at("depth").get<int>();
    ckpt.mlp.skip_layer = jm.at("skip_layer").get<int>();
    ckpt.mlp.n_freq = jm.at("n_freq").get<int>();
    {
        Rng tmp(0);
        ckpt.mlp.init(tmp);  // allocate shapes, then overwrite
        VecX flat(ckpt.mlp.parameter_count());
        read_doubles(in, pos, flat.data(), static_cast<size_t>(flat.size()));
        ckpt.mlp.from_flat(flat);
    }

    Eigen::Index beta_size = meta.at("beta_size").get<Eigen::Index>();
    ckpt.beta.resize(beta_size);
    read_doubles(in, pos, ckpt.beta.data(), static_cast<size_t>(beta_size));

    for (const auto& jf : meta.at("frames")) {
        FramePose f;
        f.file = jf.at("file").get<std::string>();
        f.split = jf.value("split", "train");
        f.camera = camera_from_json(jf.at("camera"), "checkpoint frame");
        Eigen::Index joints = jf.at("joints").get<Eigen::Index>();
        f.theta.resize(joints, 3);
        read_doubles(in, pos, f.theta.data(), static_cast<size_t>(joints) * 3);
        read_doubles(in, pos, f.translation.data(), 3);
        ckpt.frames.push_back(std::move(f));
    }
    require(pos == in.size(), "checkpoint: trailing bytes");
    return ckpt;
}

}  // namespace gsa
