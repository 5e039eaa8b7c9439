#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "headgan/tensor.hpp"

namespace headgan {

struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1, 3 or 4
    std::vector<std::uint8_t> pixels;  // row-major, interleaved

    std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    std::uint8_t at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

void write_png(const std::string& path, const ImageU8& image);
ImageU8 read_png(const std::string& path);  // 8-bit gray/RGB/RGBA

/// Frames live in [-1, 1]; face maps in [0, 1]. `signed_range` selects which
/// affine map is used between float tensors (CHW) and 8-bit pixels.
ImageU8 tensor_to_image(const Tensor& chw, bool signed_range);
Tensor image_to_tensor(const ImageU8& image, bool signed_range);

}  // namespace headgan
