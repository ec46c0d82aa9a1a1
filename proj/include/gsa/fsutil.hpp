#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gsa {

// Write-temp-then-rename; a killed process never leaves a readable partial
// file at the destination.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);
void atomic_write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace gsa
