#ifndef DCNN_IMAGE_HPP
#define DCNN_IMAGE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dcnn/errors.hpp"
#include "dcnn/tensor.hpp"

// 8-bit image handling: PNG decode/encode (via libpng), bounding-box
// crop, bilinear resize with half-pixel centers, and conversion to the
// network's input tensor layout.

namespace dcnn {

// Interleaved row-major pixels; channels is 1 (grayscale) or 3 (RGB).
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 3;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::size_t c)
        : width(w), height(h), channels(c), pixels(w * h * c, 0) {}

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
        return pixels[(y * width + x) * channels + c];
    }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
    bool operator==(const Image&) const = default;
};

// Decodes any 8/16-bit gray/palette/RGB(A) PNG to 8-bit RGB.
Image read_png(const std::string& path);

// Writes grayscale for 1-channel images, RGB for 3-channel.
void write_png(const Image& img, const std::string& path);

// Pixel bounding box, exclusive max edges.
struct BBox {
    long xmin = 0;
    long ymin = 0;
    long xmax = 0;
    long ymax = 0;

    bool operator==(const BBox&) const = default;
};

// Cuts [xmin,xmax) x [ymin,ymax); the box must lie inside the image.
Image crop(const Image& src, const BBox& box);

// Bilinear resampling with half-pixel centers: source coordinate of
// destination pixel d along an axis is (d + 0.5) * src/dst - 0.5,
// clamped to the valid range. Identity when sizes match.
Image resize_bilinear(const Image& src, std::size_t out_width, std::size_t out_height);

// (1, 3, h, w) float tensor with values scaled from 0..255 to [0, 1];
// grayscale images broadcast their single channel.
TensorF image_to_tensor(const Image& img);

} // namespace dcnn

#endif
