#include "gsa/body_io.hpp"

#include "gsa/fsutil.hpp"

namespace gsa {

using nlohmann::json;

namespace {

json points_to_json(const MatX3& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back({m(i, 0), m(i, 1), m(i, 2)});
    return out;
}

MatX3 points_from_json(const json& j, const std::string& field) {
    require(j.is_array(), "body model: '" + field + "' must be an array");
    MatX3 out(static_cast<Eigen::Index>(j.size()), 3);
    for (size_t i = 0; i < j.size(); ++i) {
        const json& row = j[i];
        require(row.is_array() && row.size() == 3,
                "body model: '" + field + "[" + std::to_string(i) + "]' must have 3 numbers");
        for (int c = 0; c < 3; ++c) out(static_cast<Eigen::Index>(i), c) = row[static_cast<size_t>(c)].get<double>();
    }
    return out;
}

}  // namespace

json body_to_json(const BodyModel& model) {
    json j;
    j["format"] = "gsavatar-body";
    j["version"] = 1;
    j["name"] = model.name;
    j["vertices"] = points_to_json(model.template_vertices);
    json faces = json::array();
    for (Eigen::Index f = 0; f < model.faces.rows(); ++f)
        faces.push_back({model.faces(f, 0), model.faces(f, 1), model.faces(f, 2)});
    j["faces"] = std::move(faces);
    j["joints"] = points_to_json(model.joint_rest);
    j["parents"] = std::vector<int>(model.parents.data(), model.parents.data() + model.parents.size());
    json skin = json::array();
    for (Eigen::Index v = 0; v < model.skinning.rows(); ++v)
        for (Eigen::Index k = 0; k < model.skinning.cols(); ++k)
            if (model.skinning(v, k) != 0.0)
                skin.push_back({static_cast<int>(v), static_cast<int>(k), model.skinning(v, k)});
    j["skinning"] = std::move(skin);
    if (!model.shape_dirs.empty()) {
        json dirs = json::array();
        for (const auto& d : model.shape_dirs) dirs.push_back(points_to_json(d));
        j["shape_dirs"] = std::move(dirs);
    }
    j["theta_canonical"] = points_to_json(model.theta_canonical);
    return j;
}

BodyModel body_from_json(const json& j) {
    require(j.is_object(), "body model: root must be an object");
    require(j.value("format", "") == "gsavatar-body", "body model: unknown 'format'");
    BodyModel m;
    m.name = j.value("name", "");
    for (const char* field : {"vertices", "joints", "parents", "skinning", "theta_canonical"})
        require(j.contains(field), std::string("body model: missing '") + field + "'");

    m.template_vertices = points_from_json(j["vertices"], "vertices");
    m.joint_rest = points_from_json(j["joints"], "joints");
    m.theta_canonical = points_from_json(j["theta_canonical"], "theta_canonical");

    const json& parents = j["parents"];
    require(parents.is_array(), "body model: 'parents' must be an array");
    m.parents.resize(static_cast<Eigen::Index>(parents.size()));
    for (size_t i = 0; i < parents.size(); ++i) m.parents[static_cast<Eigen::Index>(i)] = parents[i].get<int>();

    if (j.contains("faces")) {
        const json& faces = j["faces"];
        m.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
        for (size_t f = 0; f < faces.size(); ++f) {
            require(faces[f].is_array() && faces[f].size() == 3,
                    "body model: 'faces[" + std::to_string(f) + "]' must have 3 indices");
            for (int c = 0; c < 3; ++c)
                m.faces(static_cast<Eigen::Index>(f), c) = faces[f][static_cast<size_t>(c)].get<int>();
        }
    }

    Eigen::Index v_count = m.template_vertices.rows();
    Eigen::Index j_count = m.joint_rest.rows();
    m.skinning = MatXr::Zero(v_count, j_count);
    const json& skin = j["skinning"];
    require(skin.is_array(), "body model: 'skinning' must be an array of [vertex, joint, weight]");
    for (size_t t = 0; t < skin.size(); ++t) {
        const json& trip = skin[t];
        require(trip.is_array() && trip.size() == 3,
                "body model: 'skinning[" + std::to_string(t) + "]' must be a triplet");
        int v = trip[0].get<int>(), k = trip[1].get<int>();
        require(v >= 0 && v < v_count && k >= 0 && k < j_count,
                "body model: 'skinning[" + std::to_string(t) + "]' index out of range");
        m.skinning(v, k) = trip[2].get<double>();
    }

    if (j.contains("shape_dirs")) {
        const json& dirs = j["shape_dirs"];
        require(dirs.is_array(), "body model: 'shape_dirs' must be an array");
        for (size_t s = 0; s < dirs.size(); ++s)
            m.shape_dirs.push_back(points_from_json(dirs[s], "shape_dirs[" + std::to_string(s) + "]"));
    }

    m.validate();
    return m;
}

void save_body_model(const std::filesystem::path& path, const BodyModel& model) {
    atomic_write_file(path, body_to_json(model).dump());
}

BodyModel load_body_model(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw std::runtime_error("body model " + path.string() + ": " + e.what());
    }
    return body_from_json(j);
}

}  // namespace gsa
