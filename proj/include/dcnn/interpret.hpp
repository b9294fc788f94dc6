#ifndef DCNN_INTERPRET_HPP
#define DCNN_INTERPRET_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dcnn/image.hpp"
#include "dcnn/network.hpp"

// Interpretability renderers: tiled per-channel activation maps and
// Grad-CAM heatmap overlays.

namespace dcnn {

// 256-entry blue -> green -> yellow -> red ramp, generated from exact
// integer arithmetic (see docs/colormap.md) so renders are byte-stable:
//   i in [0,85]:    (0, 3i, 255-3i)
//   i in (85,170]:  (3(i-85), 255, 0)
//   i in (170,255]: (255, 255-3(i-170), 0)
extern const std::array<std::array<std::uint8_t, 3>, 256> kColorRamp;

// One conv/pool layer's output for a single image, each channel min-max
// normalized to 8 bits independently (constant channels render mid-gray
// 128) and tiled row-major into one grayscale image without separators.
// Unused trailing tiles stay black.
struct ActivationGrid {
    std::size_t layer_index = 0;
    std::size_t rows = 0;  // tiling geometry, rows x cols >= channels
    std::size_t cols = 0;
    std::size_t tile_height = 0;
    std::size_t tile_width = 0;
    std::size_t channels = 0;
    Image image;  // grayscale, (rows*tile_height) x (cols*tile_width)

    // Copy of one channel's tile.
    Image tile(std::size_t channel) const;
};

// Captures layers[layer_index]'s output for one (1,C,H,W) image in
// inference mode. The index must address a conv or maxpool layer.
// cols = ceil(sqrt(channels)), rows = ceil(channels / cols).
ActivationGrid activation_grid(NetworkF& net, const TensorF& image, std::size_t layer_index);

// Class-attribution map at input resolution, values in [0,1] with
// max either 1 or identically 0.
struct Heatmap {
    std::size_t height = 0;
    std::size_t width = 0;
    int class_index = 0;
    std::vector<float> values;  // row-major h x w

    float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }

    // Full-precision matrix, one CSV row per pixel row.
    std::string csv() const;
};

// Grad-CAM against the last conv layer: weights its feature maps by the
// spatial mean of d(class logit)/d(map), rectifies the weighted sum,
// bilinear-upsamples to the input size and normalizes by the max (a map
// with no positive response stays identically zero).
Heatmap grad_cam(NetworkF& net, const TensorF& image, int class_index);

// (1-alpha) * image + alpha * kColorRamp[round(255 h)] per pixel, output
// always RGB; grayscale bases broadcast. Heatmap and image sizes must
// match.
Image overlay(const Image& base, const Heatmap& heat, double alpha = 0.4);

} // namespace dcnn

#endif
