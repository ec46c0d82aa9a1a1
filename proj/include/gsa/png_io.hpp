#pragma once

#include <filesystem>

#include "gsa/image.hpp"

namespace gsa {

// 8-bit RGB PNG, values quantized with round-to-nearest. Atomic write.
void write_png(const std::filesystem::path& path, const Image& img);

Image read_png(const std::filesystem::path& path);

}  // namespace gsa
