#pragma once

#include <cstdint>
#include <vector>

#include "gsa/common.hpp"

namespace gsa {

// H x W x 3 row-major RGB, double in [0,1] for display purposes
// (intermediate render values may exceed the range before clamping).
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

    double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    size_t value_count() const { return data.size(); }

    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

// Round-to-nearest 8-bit quantization, the PNG writer's convention.
std::vector<uint8_t> quantize_u8(const Image& img);
Image dequantize_u8(const std::vector<uint8_t>& bytes, int width, int height);

// Quantize in place: img -> decode(encode(img)).
void quantize_in_place(Image& img);

}  // namespace gsa
