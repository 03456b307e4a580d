#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Grayscale 8-bit PNG I/O (libpng) plus bilinear resize. Images are row-major
// height x width.
namespace sonarzoo {

struct GrayImage {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::uint8_t> pixels; // height * width

    std::uint8_t at(std::int64_t y, std::int64_t x) const {
        return pixels[static_cast<std::size_t>(y * width + x)];
    }
};

// Accepts 8-bit grayscale PNGs only; anything else (color, palette, 16-bit,
// alpha) is rejected with an IoError naming the file.
GrayImage read_png_gray8(const std::string& path);
void write_png_gray8(const std::string& path, const GrayImage& img);

GrayImage resize_bilinear(const GrayImage& img, std::int64_t out_h, std::int64_t out_w);

} // namespace sonarzoo
