#include "gsa/png_io.hpp"

#include <png.h>

#include <cstring>
#include <vector>

#include "gsa/fsutil.hpp"

namespace gsa {

namespace {

void png_error_thrower(png_structp, png_const_charp msg) {
    throw std::runtime_error(std::string("libpng: ") + msg);
}

void append_bytes(png_structp png, png_bytep data, png_size_t len) {
    auto* buf = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
    buf->insert(buf->end(), data, data + len);
}

struct MemReader {
    const uint8_t* data;
    size_t size;
    size_t pos = 0;
};

void read_bytes(png_structp png, png_bytep out, png_size_t len) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + len > r->size) png_error(png, "truncated PNG stream");
    std::memcpy(out, r->data + r->pos, len);
    r->pos += len;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
    require(img.width > 0 && img.height > 0, "write_png: empty image");
    std::vector<uint8_t> pixels = quantize_u8(img);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_thrower, nullptr);
    require(png, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::vector<uint8_t> out;
    try {
        png_set_write_fn(png, &out, append_bytes, nullptr);
        png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                     8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        std::vector<png_bytep> rows(static_cast<size_t>(img.height));
        for (int y = 0; y < img.height; ++y)
            rows[static_cast<size_t>(y)] = pixels.data() + static_cast<size_t>(y) * img.width * 3;
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    atomic_write_file(path, out);
}

Image read_png(const std::filesystem::path& path) {
    std::string bytes = read_file(path);
    MemReader reader{reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()};

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_thrower, nullptr);
    require(png, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    std::vector<uint8_t> pixels;
    int width = 0, height = 0;
    try {
        png_set_read_fn(png, &reader, read_bytes);
        png_read_info(png, info);
        width = static_cast<int>(png_get_image_width(png, info));
        height = static_cast<int>(png_get_image_height(png, info));
        int color = png_get_color_type(png, info);
        int depth = png_get_bit_depth(png, info);
        if (depth == 16) png_set_strip_16(png);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
        png_read_update_info(png, info);
        require(png_get_rowbytes(png, info) == static_cast<size_t>(width) * 3,
                "read_png: unexpected row size");
        pixels.resize(static_cast<size_t>(width) * height * 3);
        std::vector<png_bytep> rows(static_cast<size_t>(height));
        for (int y = 0; y < height; ++y)
            rows[static_cast<size_t>(y)] = pixels.data() + static_cast<size_t>(y) * width * 3;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return dequantize_u8(pixels, width, height);
}

}  // namespace gsa
