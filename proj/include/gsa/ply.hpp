#pragma once

#include <filesystem>

#include "gsa/cloud.hpp"

namespace gsa {

// Binary little-endian PLY with the 3D-GS property layout
// (x,y,z, f_dc_0..2, f_rest_*, opacity, scale_0..2, rot_0..3), float64
// properties so the round trip is lossless.
void export_ply(const std::filesystem::path& path, const GaussianCloud& cloud);

GaussianCloud import_ply(const std::filesystem::path& path);

}  // namespace gsa
