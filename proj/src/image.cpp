#include "gsa/image.hpp"

#include <algorithm>
#include <cmath>

namespace gsa {

std::vector<uint8_t> quantize_u8(const Image& img) {
    std::vector<uint8_t> out(img.value_count());
    for (size_t i = 0; i < out.size(); ++i) {
        double v = std::clamp(img.data[i], 0.0, 1.0);
        out[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

Image dequantize_u8(const std::vector<uint8_t>& bytes, int width, int height) {
    Image img(width, height);
    require(bytes.size() == img.value_count(), "dequantize_u8: size mismatch");
    for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

void quantize_in_place(Image& img) {
    for (double& v : img.data) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

}  // namespace gsa
