#include "gsa/ply.hpp"

#include <cstring>
#include <sstream>

#include "gsa/fsutil.hpp"

namespace gsa {

namespace {

std::vector<std::string> property_names(int sh_dim) {
    std::vector<std::string> names = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};
    int rest = 3 * (sh_dim - 1);
    for (int i = 0; i < rest; ++i) names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
    return names;
}

}  // namespace

void export_ply(const std::filesystem::path& path, const GaussianCloud& cloud) {
    int sh_dim = cloud.sh_dim();
    Eigen::Index n = cloud.size();
    auto names = property_names(sh_dim);

    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n";
    header << "element vertex " << n << "\n";
    for (const auto& name : names) header << "property double " << name << "\n";
    header << "end_header\n";

    std::string out = header.str();
    size_t row_bytes = names.size() * 8;
    size_t off = out.size();
    out.resize(off + static_cast<size_t>(n) * row_bytes);

    std::vector<double> row(names.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        size_t c = 0;
        for (int a = 0; a < 3; ++a) row[c++] = cloud.positions(i, a);
        for (int a = 0; a < 3; ++a) row[c++] = cloud.sh_coeffs(i, a);  // coeff 0, channel a
        // f_rest channel-major: all higher coeffs of R, then G, then B
        for (int ch = 0; ch < 3; ++ch)
            for (int b = 1; b < sh_dim; ++b) row[c++] = cloud.sh_coeffs(i, 3 * b + ch);
        row[c++] = cloud.opacity_logits[i];
        for (int a = 0; a < 3; ++a) row[c++] = cloud.log_scales(i, a);
        for (int a = 0; a < 4; ++a) row[c++] = cloud.rotations(i, a);
        std::memcpy(out.data() + off + static_cast<size_t>(i) * row_bytes, row.data(), row_bytes);
    }
    atomic_write_file(path, out);
}

GaussianCloud import_ply(const std::filesystem::path& path) {
    std::string in = read_file(path);
    size_t header_end = in.find("end_header\n");
    require(header_end != std::string::npos, "ply: missing end_header");
    std::istringstream header(in.substr(0, header_end));
    std::string line;
    std::getline(header, line);
    require(line == "ply", "ply: bad signature");
    std::getline(header, line);
    require(line == "format binary_little_endian 1.0", "ply: unsupported format: " + line);

    Eigen::Index n = -1;
    std::vector<std::string> names;
    while (std::getline(header, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "element") {
            std::string what;
            ls >> what >> n;
            require(what == "vertex", "ply: unsupported element: " + what);
        } else if (tok == "property") {
            std::string type, name;
            ls >> type >> name;
            require(type == "double", "ply: unsupported property type: " + type);
            names.push_back(name);
        } else if (tok == "comment") {
            continue;
        } else {
            throw std::runtime_error("ply: unexpected header line: " + line);
        }
    }
    require(n >= 0, "ply: missing vertex element");

    // infer SH degree from the f_rest property count
    int rest = 0;
    for (const auto& name : names)
        if (name.rfind("f_rest_", 0) == 0) ++rest;
    require(rest % 3 == 0, "ply: f_rest count not divisible by 3");
    int sh_dim = rest / 3 + 1;
    int degree = static_cast<int>(std::lround(std::sqrt(static_cast<double>(sh_dim)))) - 1;
    require(sh_coeff_count(degree) == sh_dim, "ply: f_rest count is not a valid SH layout");
    auto expected = property_names(sh_dim);
    require(names == expected, "ply: property layout mismatch");

    size_t row_bytes = names.size() * 8;
    size_t data_off = header_end + std::strlen("end_header\n");
    require(in.size() == data_off + static_cast<size_t>(n) * row_bytes, "ply: truncated data");

    GaussianCloud cloud;
    cloud.resize(n, degree);
    std::vector<double> row(names.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        std::memcpy(row.data(), in.data() + data_off + static_cast<size_t>(i) * row_bytes, row_bytes);
        size_t c = 0;
        for (int a = 0; a < 3; ++a) cloud.positions(i, a) = row[c++];
        for (int a = 0; a < 3; ++a) cloud.sh_coeffs(i, a) = row[c++];
        for (int ch = 0; ch < 3; ++ch)
            for (int b = 1; b < sh_dim; ++b) cloud.sh_coeffs(i, 3 * b + ch) = row[c++];
        cloud.opacity_logits[i] = row[c++];
        for (int a = 0; a < 3; ++a) cloud.log_scales(i, a) = row[c++];
        for (int a = 0; a < 4; ++a) cloud.rotations(i, a) = row[c++];
    }
    return cloud;
}

}  // namespace gsa
