#include "dcnn/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dcnn {

namespace {

// Both renderers are defined over the frozen model, so they always run
// in inference mode and put the caller's mode back afterwards.
struct InferenceGuard {
    NetworkF& net;
    Mode saved;
    explicit InferenceGuard(NetworkF& n) : net(n), saved(n.mode) { net.mode = Mode::inference; }
    ~InferenceGuard() { net.mode = saved; }
};

void require_single_image(const TensorF& image, const char* op) {
    if (image.shape().n != 1)
        throw ConfigError(std::string(op) + " works on a single image, got batch size " +
                          std::to_string(image.shape().n));
}

// Half-pixel-center bilinear resample of one float plane, no rounding.
std::vector<float> upsample_bilinear(const std::vector<float>& src, std::size_t sh,
                                     std::size_t sw, std::size_t dh, std::size_t dw) {
    std::vector<float> out(dh * dw);
    for (std::size_t dy = 0; dy < dh; ++dy) {
        double sy = (double(dy) + 0.5) * double(sh) / double(dh) - 0.5;
        sy = std::min(std::max(sy, 0.0), double(sh - 1));
        const std::size_t y0 = std::size_t(sy);
        const std::size_t y1 = std::min(y0 + 1, sh - 1);
        const double fy = sy - double(y0);
        for (std::size_t dx = 0; dx < dw; ++dx) {
            double sx = (double(dx) + 0.5) * double(sw) / double(dw) - 0.5;
            sx = std::min(std::max(sx, 0.0), double(sw - 1));
            const std::size_t x0 = std::size_t(sx);
            const std::size_t x1 = std::min(x0 + 1, sw - 1);
            const double fx = sx - double(x0);
            const double v = src[y0 * sw + x0] * (1 - fx) * (1 - fy) +
                             src[y0 * sw + x1] * fx * (1 - fy) +
                             src[y1 * sw + x0] * (1 - fx) * fy + src[y1 * sw + x1] * fx * fy;
            out[dy * dw + dx] = float(v);
        }
    }
    return out;
}

} // namespace

Image ActivationGrid::tile(std::size_t channel) const {
    if (channel >= channels)
        throw ConfigError("tile " + std::to_string(channel) + " out of range, grid has " +
                          std::to_string(channels) + " channels");
    const std::size_t r = channel / cols;
    const std::size_t c = channel % cols;
    Image out(tile_width, tile_height, 1);
    for (std::size_t y = 0; y < tile_height; ++y)
        for (std::size_t x = 0; x < tile_width; ++x)
            out.at(x, y, 0) = image.at(c * tile_width + x, r * tile_height + y, 0);
    return out;
}

ActivationGrid activation_grid(NetworkF& net, const TensorF& image, std::size_t layer_index) {
    require_single_image(image, "activation_grid");
    if (layer_index >= net.layers.size())
        throw ConfigError("layer index " + std::to_string(layer_index) +
                          " out of range, network has " + std::to_string(net.layers.size()) +
                          " layers");
    const LayerKind kind = net.spec.layers[layer_index].kind;
    if (kind != LayerKind::conv && kind != LayerKind::maxpool)
        throw ConfigError("layer " + std::to_string(layer_index) + " (" +
                          layer_kind_name(kind) + "): activation grids need a conv or pool layer");

    InferenceGuard guard(net);
    ForwardResult<float> fwd = forward(net, image, {layer_index});
    const TensorF& maps = fwd.captured.at(layer_index);
    const Shape4 s = maps.shape();

    ActivationGrid grid;
    grid.layer_index = layer_index;
    grid.channels = s.c;
    grid.tile_height = s.h;
    grid.tile_width = s.w;
    grid.cols = std::size_t(std::ceil(std::sqrt(double(s.c))));
    grid.rows = (s.c + grid.cols - 1) / grid.cols;
    grid.image = Image(grid.cols * s.w, grid.rows * s.h, 1);

    for (std::size_t c = 0; c < s.c; ++c) {
        const float* plane = maps.plane(0, c);
        const auto [lo_it, hi_it] = std::minmax_element(plane, plane + s.h * s.w);
        const double lo = *lo_it, hi = *hi_it;
        const std::size_t ox = (c % grid.cols) * s.w;
        const std::size_t oy = (c / grid.cols) * s.h;
        for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t x = 0; x < s.w; ++x) {
                const double v = plane[y * s.w + x];
                const long px = hi > lo ? std::lround(255.0 * (v - lo) / (hi - lo)) : 128;
                grid.image.at(ox + x, oy + y, 0) = std::uint8_t(px);
            }
    }
    return grid;
}

std::string Heatmap::csv() const {
    std::ostringstream out;
    out.precision(9);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            if (x) out << ',';
            out << at(y, x);
        }
        out << '\n';
    }
    return out.str();
}

Heatmap grad_cam(NetworkF& net, const TensorF& image, int class_index) {
    require_single_image(image, "grad_cam");
    const std::size_t tap = net.spec.last_conv_index();
    if (tap == std::size_t(-1)) throw ConfigError("grad_cam needs a network with a conv layer");

    InferenceGuard guard(net);
    std::vector<std::size_t> all(net.layers.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    ForwardResult<float> fwd = forward(net, image, all);

    const Shape4 out_shape = fwd.logits.shape();
    if (class_index < 0 || std::size_t(class_index) >= out_shape.c)
        throw ConfigError("class index " + std::to_string(class_index) +
                          " out of range for " + std::to_string(out_shape.c) + " outputs");

    // d(logit_c)/d(layer output), walked from the head down to the layer
    // right above the tap; every step uses inference-mode semantics.
    TensorF upstream(out_shape);
    upstream.at(0, std::size_t(class_index), 0, 0) = 1.0f;

    for (std::size_t i = net.layers.size(); i-- > tap + 1;) {
        const Layer<float>& layer = net.layers[i];
        const TensorF& input = i == 0 ? image : fwd.captured.at(i - 1);
        switch (layer.spec.kind) {
            case LayerKind::rescale: {
                TensorF down(input.shape());
                for (std::size_t j = 0; j < down.size(); ++j)
                    down[j] = upstream[j] * float(layer.spec.scale);
                upstream = std::move(down);
                break;
            }
            case LayerKind::conv:
                upstream = cross_correlate2d_backward(input, layer.conv, upstream).input;
                break;
            case LayerKind::batchnorm:
                upstream = batch_norm_backward(input, layer.bn, Mode::inference,
                                               BatchNormCache<float>{}, upstream)
                               .input;
                break;
            case LayerKind::activation:
                upstream = activation_backward(layer.spec.activation, input, upstream);
                break;
            case LayerKind::maxpool: {
                const PoolResult<float> pooled =
                    pool2d(input, PoolMode::max, layer.spec.window, layer.spec.window);
                upstream = pool2d_backward(input.shape(), pooled, PoolMode::max,
                                           layer.spec.window, layer.spec.window, upstream);
                break;
            }
            case LayerKind::dropout:
                break;  // identity in inference mode
            case LayerKind::flatten:
                upstream = reshape(upstream, input.shape());
                break;
            case LayerKind::dense:
                upstream = dense_backward(input, layer.weights, upstream).input;
                break;
        }
    }

    const TensorF& maps = fwd.captured.at(tap);
    const Shape4 ms = maps.shape();
    const std::size_t plane = ms.h * ms.w;

    std::vector<float> raw(plane, 0.0f);
    for (std::size_t k = 0; k < ms.c; ++k) {
        const float* grad = upstream.plane(0, k);
        double alpha = 0;
        for (std::size_t i = 0; i < plane; ++i) alpha += grad[i];
        alpha /= double(plane);
        const float* a = maps.plane(0, k);
        for (std::size_t i = 0; i < plane; ++i) raw[i] += float(alpha) * a[i];
    }
    for (float& v : raw) v = std::max(v, 0.0f);

    Heatmap heat;
    heat.class_index = class_index;
    heat.height = image.shape().h;
    heat.width = image.shape().w;
    heat.values = upsample_bilinear(raw, ms.h, ms.w, heat.height, heat.width);

    const float peak = *std::max_element(heat.values.begin(), heat.values.end());
    if (peak > 0)
        for (float& v : heat.values) v /= peak;
    return heat;
}

Image overlay(const Image& base, const Heatmap& heat, double alpha) {
    if (alpha < 0 || alpha > 1)
        throw ConfigError("overlay alpha must be in [0,1], got " + std::to_string(alpha));
    if (base.width != heat.width || base.height != heat.height)
        throw ConfigError("overlay size mismatch: image " + std::to_string(base.width) + "x" +
                          std::to_string(base.height) + " vs heatmap " +
                          std::to_string(heat.width) + "x" + std::to_string(heat.height));

    Image out(base.width, base.height, 3);
    for (std::size_t y = 0; y < base.height; ++y)
        for (std::size_t x = 0; x < base.width; ++x) {
            const double h = std::min(std::max(double(heat.at(y, x)), 0.0), 1.0);
            const auto& color = kColorRamp[std::size_t(std::lround(h * 255.0))];
            for (std::size_t c = 0; c < 3; ++c) {
                const double b = base.channels == 3 ? base.at(x, y, c) : base.at(x, y, 0);
                out.at(x, y, c) =
                    std::uint8_t(std::lround((1.0 - alpha) * b + alpha * double(color[c])));
            }
        }
    return out;
}

} // namespace dcnn
