#include "gsa/fsutil.hpp"

#include <fstream>

#include "gsa/common.hpp"

namespace gsa {

namespace {
void atomic_write_impl(const std::filesystem::path& path, const char* data, size_t size) {
    std::filesystem::path dir = path.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), "cannot open for write: " + tmp.string());
        out.write(data, static_cast<std::streamsize>(size));
        out.flush();
        require(out.good(), "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}
}  // namespace

void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
    atomic_write_impl(path, bytes.data(), bytes.size());
}

void atomic_write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    atomic_write_impl(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open: " + path.string());
    std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(!in.bad(), "read failed: " + path.string());
    return out;
}

}  // namespace gsa
