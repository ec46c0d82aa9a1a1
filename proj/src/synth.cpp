#include "gsa/synth.hpp"

#include <cmath>

#include "gsa/avatar.hpp"
#include "gsa/body_io.hpp"
#include "gsa/fsutil.hpp"
#include "gsa/png_io.hpp"
#include "gsa/rng.hpp"

namespace gsa {

using nlohmann::json;

namespace {

struct Tube {
    Vec3 from, to;
    double radius;
    double taper;  // end radius = radius * taper
};

constexpr int kRingVerts = 8;

void add_tube(const Tube& tube, std::vector<Vec3>& acc_verts,
              std::vector<Eigen::Vector3i>& acc_faces) {
    Vec3 axis = tube.to - tube.from;
    double len = axis.norm();
    Vec3 n = axis / len;
    Vec3 ref = std::abs(n.y()) < 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
    Vec3 u = n.cross(ref).normalized();
    Vec3 v = n.cross(u);
    int rings = std::max(2, static_cast<int>(std::ceil(len / 0.07)) + 1);
    int base = static_cast<int>(acc_verts.size());
    for (int r = 0; r < rings; ++r) {
        double t = static_cast<double>(r) / (rings - 1);
        double rad = tube.radius * (1.0 + (tube.taper - 1.0) * t);
        Vec3 center = tube.from + t * axis;
        for (int s = 0; s < kRingVerts; ++s) {
            double a = 2.0 * M_PI * s / kRingVerts;
            acc_verts.push_back(center + rad * (std::cos(a) * u + std::sin(a) * v));
        }
    }
    for (int r = 0; r + 1 < rings; ++r) {
        for (int s = 0; s < kRingVerts; ++s) {
            int s1 = (s + 1) % kRingVerts;
            int a = base + r * kRingVerts + s;
            int b = base + r * kRingVerts + s1;
            int c = base + (r + 1) * kRingVerts + s;
            int d = base + (r + 1) * kRingVerts + s1;
            acc_faces.push_back({a, b, c});
            acc_faces.push_back({b, d, c});
        }
    }
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    Vec3 ab = b - a;
    double t = ab.squaredNorm() > 0 ? (p - a).dot(ab) / ab.squaredNorm() : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

}  // namespace

BodyModel make_humanoid() {
    BodyModel m;
    m.name = "procedural-humanoid";
    const int j_count = 16;
    m.joint_rest.resize(j_count, 3);
    m.parents.resize(j_count);
    auto set_joint = [&](int j, int parent, double x, double y, double z) {
        m.parents[j] = parent;
        m.joint_rest.row(j) << x, y, z;
    };
    set_joint(0, -1, 0.00, 0.95, 0.0);   // pelvis
    set_joint(1, 0, 0.00, 1.10, 0.0);    // spine
    set_joint(2, 1, 0.00, 1.28, 0.0);    // chest
    set_joint(3, 2, 0.00, 1.48, 0.0);    // head
    set_joint(4, 2, 0.16, 1.40, 0.0);    // l_shoulder
    set_joint(5, 4, 0.42, 1.18, 0.0);    // l_elbow
    set_joint(6, 5, 0.66, 0.97, 0.0);    // l_wrist
    set_joint(7, 2, -0.16, 1.40, 0.0);   // r_shoulder
    set_joint(8, 7, -0.42, 1.18, 0.0);   // r_elbow
    set_joint(9, 8, -0.66, 0.97, 0.0);   // r_wrist
    set_joint(10, 0, 0.09, 0.92, 0.0);   // l_hip
    set_joint(11, 10, 0.14, 0.52, 0.0);  // l_knee
    set_joint(12, 11, 0.18, 0.08, 0.0);  // l_ankle
    set_joint(13, 0, -0.09, 0.92, 0.0);  // r_hip
    set_joint(14, 13, -0.14, 0.52, 0.0); // r_knee
    set_joint(15, 14, -0.18, 0.08, 0.0); // r_ankle

    auto jp = [&](int j) { return Vec3(m.joint_rest.row(j)); };

    std::vector<Vec3> verts;
    std::vector<Eigen::Vector3i> faces;
    auto tube = [&](int a, int b, double r, double taper = 1.0) {
        add_tube({jp(a), jp(b), r, taper}, verts, faces);
    };
    tube(0, 1, 0.135, 1.0);                       // lower torso
    tube(1, 2, 0.125, 0.95);                      // upper torso
    add_tube({jp(2), jp(3) + Vec3(0, -0.04, 0), 0.055, 1.0}, verts, faces);              // neck
    add_tube({jp(3) + Vec3(0, 0.02, 0), jp(3) + Vec3(0, 0.22, 0), 0.095, 0.55}, verts, faces);  // head
    tube(4, 5, 0.050, 0.85);                      // upper arms
    tube(7, 8, 0.050, 0.85);
    tube(5, 6, 0.040, 0.80);                      // forearms
    tube(8, 9, 0.040, 0.80);
    add_tube({jp(6), jp(6) + Vec3(0.07, -0.06, 0), 0.034, 0.7}, verts, faces);   // hands
    add_tube({jp(9), jp(9) + Vec3(-0.07, -0.06, 0), 0.034, 0.7}, verts, faces);
    tube(10, 11, 0.068, 0.85);                    // thighs
    tube(13, 14, 0.068, 0.85);
    tube(11, 12, 0.048, 0.80);                    // shins
    tube(14, 15, 0.048, 0.80);
    add_tube({jp(12), jp(12) + Vec3(0, -0.04, 0.11), 0.036, 0.8}, verts, faces); // feet
    add_tube({jp(15), jp(15) + Vec3(0, -0.04, 0.11), 0.036, 0.8}, verts, faces);

    Eigen::Index v_count = static_cast<Eigen::Index>(verts.size());
    m.template_vertices.resize(v_count, 3);
    for (Eigen::Index i = 0; i < v_count; ++i) m.template_vertices.row(i) = verts[static_cast<size_t>(i)].transpose();
    m.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (size_t f = 0; f < faces.size(); ++f) m.faces.row(static_cast<Eigen::Index>(f)) = faces[f].transpose();

    // Joint j drives the segments from j toward its children (stub extensions
    // for leaves); weights are a softmax over squared segment distances.
    std::vector<std::vector<std::pair<Vec3, Vec3>>> driven(j_count);
    for (int j = 1; j < j_count; ++j) driven[m.parents[j]].push_back({jp(m.parents[j]), jp(j)});
    auto stub = [&](int j, const Vec3& d) { driven[j].push_back({jp(j), jp(j) + d}); };
    stub(3, Vec3(0, 0.24, 0));
    stub(6, Vec3(0.08, -0.07, 0));
    stub(9, Vec3(-0.08, -0.07, 0));
    stub(12, Vec3(0, -0.05, 0.12));
    stub(15, Vec3(0, -0.05, 0.12));

    const double tau = 0.055;
    const int max_weights = 4;
    m.skinning = MatXr::Zero(v_count, j_count);
    for (Eigen::Index v = 0; v < v_count; ++v) {
        Vec3 p = m.template_vertices.row(v);
        std::vector<std::pair<double, int>> scored;
        for (int j = 0; j < j_count; ++j) {
            double dmin = std::numeric_limits<double>::max();
            for (const auto& seg : driven[j])
                dmin = std::min(dmin, point_segment_distance(p, seg.first, seg.second));
            scored.push_back({dmin, j});
        }
        std::sort(scored.begin(), scored.end());
        double total = 0.0;
        for (int k = 0; k < max_weights; ++k) {
            double w = std::exp(-(scored[static_cast<size_t>(k)].first * scored[static_cast<size_t>(k)].first) /
                                (tau * tau));
            m.skinning(v, scored[static_cast<size_t>(k)].second) = w;
            total += w;
        }
        m.skinning.row(v) /= total;
    }

    // shape blendshapes: vertical stretch about the pelvis and a horizontal widen
    double pelvis_y = m.joint_rest(0, 1);
    MatX3 stretch = MatX3::Zero(v_count, 3), widen = MatX3::Zero(v_count, 3);
    for (Eigen::Index v = 0; v < v_count; ++v) {
        stretch(v, 1) = 0.12 * (m.template_vertices(v, 1) - pelvis_y);
        widen(v, 0) = 0.10 * m.template_vertices(v, 0);
        widen(v, 2) = 0.10 * m.template_vertices(v, 2);
    }
    m.shape_dirs = {stretch, widen};

    m.theta_canonical = MatX3::Zero(j_count, 3);
    m.validate();
    return m;
}

GaussianCloud make_teacher_cloud(const BodyModel& model, uint64_t seed) {
    Rng rng(seed ^ 0x7ea0c1e5u);
    Eigen::Index n = model.vertex_count();
    GaussianCloud cloud;
    cloud.resize(n, kMaxShDegree);
    cloud.positions = model.template_vertices;

    // scale from the mean distance to the 3 nearest distinct vertices
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> d2;
        d2.reserve(static_cast<size_t>(n) - 1);
        Vec3 p = cloud.positions.row(i);
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) d2.push_back((cloud.positions.row(j).transpose() - p).squaredNorm());
        std::partial_sort(d2.begin(), d2.begin() + 3, d2.end());
        double mean = (std::sqrt(d2[0]) + std::sqrt(d2[1]) + std::sqrt(d2[2])) / 3.0;
        cloud.log_scales.row(i).setConstant(std::log(std::max(1e-4, 0.62 * mean)));
    }
    cloud.opacity_logits.setConstant(logit(0.92));

    // palette per dominant joint, with per-Gaussian jitter so limb twists are
    // observable
    const double palette[16][3] = {
        {0.25, 0.30, 0.65}, {0.30, 0.40, 0.70}, {0.25, 0.55, 0.60}, {0.85, 0.65, 0.50},
        {0.30, 0.65, 0.30}, {0.45, 0.75, 0.35}, {0.60, 0.85, 0.45}, {0.65, 0.60, 0.20},
        {0.75, 0.75, 0.30}, {0.85, 0.85, 0.45}, {0.70, 0.25, 0.25}, {0.80, 0.40, 0.30},
        {0.85, 0.55, 0.35}, {0.55, 0.20, 0.45}, {0.65, 0.35, 0.60}, {0.75, 0.50, 0.70}};
    constexpr double kC0 = 0.28209479177387814;
    for (Eigen::Index i = 0; i < n; ++i) {
        int dominant = 0;
        model.skinning.row(i).maxCoeff(&dominant);
        for (int c = 0; c < 3; ++c) {
            double col = palette[dominant][c] + rng.uniform(-0.10, 0.10);
            col = std::clamp(col, 0.08, 0.92);
            cloud.sh_coeffs(i, c) = (col - 0.5) / kC0;
        }
        for (int b = 1; b < 4; ++b)  // gentle band-1 view dependence
            for (int c = 0; c < 3; ++c) cloud.sh_coeffs(i, 3 * b + c) = rng.uniform(-0.02, 0.02);
    }
    return cloud;
}

void sample_pose(const BodyModel& model, double t, bool novel, double style_phase, MatX3& theta,
                 Vec3& translation) {
    Eigen::Index j = model.joint_count();
    require(j == 16, "sample_pose expects the procedural humanoid");
    theta.setZero(j, 3);
    double amp = novel ? 1.2 : 1.0;
    double ph = (novel ? 2.0 : 0.0) + style_phase;
    double w = 2.0 * M_PI;
    auto s = [&](double f, double phase) { return amp * std::sin(f * w * t + phase + ph); };

    theta.row(0) << 0.04 * s(1, 0.9), 0.0, 0.03 * s(2, 1.7);
    theta(0, 1) = (novel ? 2.4 : 2.2) * std::sin(w * t + 0.3 + 0.2 * style_phase + (novel ? 0.5 : 0.0));
    theta.row(1) << 0.06 * s(2, 0.5), 0.10 * s(1, 1.1), 0.04 * s(1, 2.0);
    theta.row(2) << 0.05 * s(1, 0.2), 0.06 * s(1, 2.3), 0.03 * s(2, 0.8);
    theta.row(3) << 0.10 * s(1, 1.5), 0.12 * s(1, 0.4), 0.05 * s(2, 2.2);
    theta.row(4) << 0.22 * s(1, 0.0), 0.10 * s(1, 1.3), 0.28 * s(1, 2.1);
    theta.row(5) << 0.08 * s(1, 0.7), 0.10 * s(1, 1.9), 0.55 + 0.30 * s(1, 0.9);
    theta.row(6) << 0.10 * s(1, 0.2), 0.08 * s(1, 1.1), 0.15 * s(1, 2.6);
    theta.row(7) << 0.22 * s(1, 3.1), 0.10 * s(1, 0.6), -0.28 * s(1, 1.4);
    theta.row(8) << 0.08 * s(1, 2.4), 0.10 * s(1, 0.3), -0.55 - 0.30 * s(1, 2.8);
    theta.row(9) << 0.10 * s(1, 1.8), 0.08 * s(1, 2.9), -0.15 * s(1, 0.5);
    theta.row(10) << 0.30 * s(1, 0.0), 0.05 * s(1, 1.0), 0.06 * s(1, 2.0);
    theta.row(11) << 0.35 + 0.25 * s(1, 1.2), 0.0, 0.0;
    theta.row(12) << 0.12 * s(1, 0.4), 0.0, 0.05 * s(1, 1.6);
    theta.row(13) << 0.30 * s(1, 3.14), 0.05 * s(1, 2.1), 0.06 * s(1, 0.9);
    theta.row(14) << 0.35 + 0.25 * s(1, 4.3), 0.0, 0.0;
    theta.row(15) << 0.12 * s(1, 2.7), 0.0, 0.05 * s(1, 0.3);

    translation = Vec3(0.03 * s(1, 0.7), 0.02 * s(2, 0.1), 0.03 * s(1, 1.9));
}

SynthResult synth_dataset(const std::filesystem::path& out_dir, const SynthOptions& opts) {
    require(opts.train_frames >= 2, "synth: need at least 2 training frames");
    std::filesystem::create_directories(out_dir);

    BodyModel body = make_humanoid();
    save_body_model(out_dir / "body.json", body);

    AvatarModel teacher;
    teacher.body = body;
    teacher.cloud = make_teacher_cloud(body, opts.seed);
    {
        Rng mlp_rng(opts.seed ^ 0x51f0cafeu);
        teacher.mlp.init(mlp_rng);  // zero heads: identity non-rigid field
    }
    teacher.use_mlp = true;
    teacher.beta = VecX::Zero(body.shape_count());
    teacher.prepare();

    int res = opts.resolution;
    Camera camera = Camera::look_at(Vec3(0, 0.92, 3.4), Vec3(0, 0.92, 0), Vec3(0, 1, 0),
                                    1.6 * res, res, res);

    json manifest;
    manifest["format"] = "gsavatar-scene";
    manifest["version"] = 1;
    manifest["width"] = res;
    manifest["height"] = res;
    manifest["background"] = {opts.background.x(), opts.background.y(), opts.background.z()};
    manifest["body_model"] = "body.json";
    manifest["beta"] = std::vector<double>(static_cast<size_t>(body.shape_count()), 0.0);
    json frames = json::array();

    Rng traj_rng(opts.seed ^ 0x2c9277b5u);
    double style_phase = traj_rng.uniform(0.0, 2.0 * M_PI);

    Checkpoint ckpt;
    ckpt.body_model_path = "body.json";  // relative: datasets are relocatable
    ckpt.body_model = body_to_json(body);
    ckpt.cloud = teacher.cloud;
    ckpt.mlp = teacher.mlp;
    ckpt.beta = teacher.beta;
    ckpt.config = {{"teacher", true}, {"seed", opts.seed}};

    int total = opts.train_frames + opts.test_frames;
    for (int f = 0; f < total; ++f) {
        bool novel = f >= opts.train_frames;
        double t = novel ? (f - opts.train_frames + 0.37) / std::max(1, opts.test_frames)
                         : static_cast<double>(f) / opts.train_frames;
        MatX3 theta;
        Vec3 translation;
        sample_pose(body, t, novel, style_phase, theta, translation);

        Image img = teacher.render_pose(theta, translation, camera, opts.background);
        char name[64];
        std::snprintf(name, sizeof(name), "frames/frame_%04d.png", f);
        write_png(out_dir / name, img);

        json jf;
        jf["file"] = name;
        jf["split"] = novel ? "test" : "train";
        std::vector<double> th(theta.data(), theta.data() + theta.size());
        jf["theta"] = th;
        jf["translation"] = {translation.x(), translation.y(), translation.z()};
        jf["camera"] = camera_to_json(camera);
        frames.push_back(jf);

        FramePose fp;
        fp.file = name;
        fp.split = novel ? "test" : "train";
        fp.theta = theta;
        fp.translation = translation;
        fp.camera = camera;
        ckpt.frames.push_back(std::move(fp));
    }
    manifest["frames"] = std::move(frames);
    atomic_write_file(out_dir / "manifest.json", manifest.dump(2));

    SynthResult result;
    result.dataset_dir = out_dir;
    result.teacher_checkpoint = out_dir / "teacher.ckpt";
    save_checkpoint(result.teacher_checkpoint, ckpt);
    return result;
}

}  // namespace gsa
