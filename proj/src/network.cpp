#include "dcnn/network.hpp"

namespace dcnn {

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::rescale: return "rescale";
        case LayerKind::conv: return "conv";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::activation: return "activation";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::dropout: return "dropout";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
    }
    return "?";
}

LayerSpec LayerSpec::rescale(double scale) {
    LayerSpec s;
    s.kind = LayerKind::rescale;
    s.scale = scale;
    return s;
}

LayerSpec LayerSpec::conv(int channels, int kernel, int stride, int padding) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.channels = channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::batchnorm() {
    LayerSpec s;
    s.kind = LayerKind::batchnorm;
    return s;
}

LayerSpec LayerSpec::act(Activation a) {
    LayerSpec s;
    s.kind = LayerKind::activation;
    s.activation = a;
    return s;
}

LayerSpec LayerSpec::maxpool(int window) {
    LayerSpec s;
    s.kind = LayerKind::maxpool;
    s.window = window;
    return s;
}

LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::dense(int units) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.channels = units;
    return s;
}

NetworkSpec NetworkSpec::reference(std::size_t in_size, Activation activation,
                                   double dropout_rate) {
    NetworkSpec spec;
    spec.in_channels = 3;
    spec.in_size = in_size;
    spec.layers.push_back(LayerSpec::rescale());
    for (int width : {8, 16, 32, 48, 64, 96}) {
        spec.layers.push_back(LayerSpec::conv(width, 3, 1, 1));
        spec.layers.push_back(LayerSpec::batchnorm());
        spec.layers.push_back(LayerSpec::act(activation));
        spec.layers.push_back(LayerSpec::maxpool(2));
    }
    spec.layers.push_back(LayerSpec::flatten());
    spec.layers.push_back(LayerSpec::dense(112));
    spec.layers.push_back(LayerSpec::batchnorm());
    spec.layers.push_back(LayerSpec::act(activation));
    spec.layers.push_back(LayerSpec::dropout(dropout_rate));
    spec.layers.push_back(LayerSpec::dense(3));
    return spec;
}

namespace {

[[noreturn]] void fail_layer(std::size_t i, LayerKind kind, const std::string& why) {
    throw ConfigError("layer " + std::to_string(i) + " (" + layer_kind_name(kind) + "): " + why);
}

} // namespace

std::vector<Shape4> NetworkSpec::output_shapes(std::size_t batch) const {
    if (layers.empty()) throw ConfigError("network spec has no layers");
    if (in_channels == 0 || in_size == 0)
        throw ConfigError("network input shape must be non-zero");

    std::vector<Shape4> shapes;
    shapes.reserve(layers.size());
    Shape4 cur{batch, in_channels, in_size, in_size};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& ls = layers[i];
        switch (ls.kind) {
            case LayerKind::rescale:
            case LayerKind::batchnorm:
            case LayerKind::activation:
            case LayerKind::dropout:
                break;
            case LayerKind::conv: {
                if (ls.channels <= 0) fail_layer(i, ls.kind, "channels must be > 0");
                if (ls.kernel <= 0) fail_layer(i, ls.kind, "kernel must be > 0");
                if (ls.stride <= 0) fail_layer(i, ls.kind, "stride must be > 0");
                if (ls.padding < 0) fail_layer(i, ls.kind, "padding must be >= 0");
                try {
                    cur = Shape4{cur.n, std::size_t(ls.channels),
                                 conv_out_extent(cur.h, std::size_t(ls.kernel), ls.stride,
                                                 ls.padding),
                                 conv_out_extent(cur.w, std::size_t(ls.kernel), ls.stride,
                                                 ls.padding)};
                } catch (const ConfigError& e) {
                    fail_layer(i, ls.kind, std::string(e.what()) + " (input " + cur.str() + ")");
                }
                break;
            }
            case LayerKind::maxpool: {
                if (ls.window <= 0) fail_layer(i, ls.kind, "window must be > 0");
                try {
                    cur = Shape4{cur.n, cur.c,
                                 conv_out_extent(cur.h, std::size_t(ls.window), ls.window, 0),
                                 conv_out_extent(cur.w, std::size_t(ls.window), ls.window, 0)};
                } catch (const ConfigError& e) {
                    fail_layer(i, ls.kind, std::string(e.what()) + " (input " + cur.str() + ")");
                }
                break;
            }
            case LayerKind::flatten:
                cur = Shape4{cur.n, cur.c * cur.h * cur.w, 1, 1};
                break;
            case LayerKind::dense:
                if (ls.channels <= 0) fail_layer(i, ls.kind, "units must be > 0");
                if (cur.h != 1 || cur.w != 1)
                    fail_layer(i, ls.kind,
                               "needs flattened input, got " + cur.str() +
                                   " (insert a flatten layer)");
                cur = Shape4{cur.n, std::size_t(ls.channels), 1, 1};
                break;
        }
        shapes.push_back(cur);
    }
    return shapes;
}

void NetworkSpec::validate() const {
    output_shapes(1);  // hyperparameter and shape compatibility sweep

    std::size_t first_dense = std::size_t(-1);
    std::size_t last_dense = std::size_t(-1);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& ls = layers[i];
        if (ls.kind == LayerKind::rescale) {
            if (i != 0) fail_layer(i, ls.kind, "rescale is only allowed as the first layer");
            if (!(ls.scale > 0)) fail_layer(i, ls.kind, "scale must be > 0");
        }
        if (ls.kind == LayerKind::dropout && !(ls.rate >= 0 && ls.rate < 1))
            fail_layer(i, ls.kind, "rate must be in [0, 1)");
        if (ls.kind == LayerKind::conv &&
            (i + 1 >= layers.size() || layers[i + 1].kind != LayerKind::batchnorm))
            fail_layer(i, ls.kind, "every conv must be followed by a batchnorm");
        if (ls.kind == LayerKind::dense) {
            if (first_dense == std::size_t(-1)) first_dense = i;
            last_dense = i;
        }
    }
    if (first_dense != std::size_t(-1)) {
        if (first_dense != layers.size() - 1 &&
            layers[first_dense + 1].kind != LayerKind::batchnorm)
            fail_layer(first_dense, LayerKind::dense,
                       "the first (hidden) dense must be followed by a batchnorm");
        if (last_dense != layers.size() - 1)
            fail_layer(last_dense, LayerKind::dense,
                       "the last dense must be the final layer (the classifier head)");
        if (layers[last_dense].channels != 3)
            fail_layer(last_dense, LayerKind::dense, "the classifier head must have 3 units");
    }
}

std::size_t NetworkSpec::last_conv_index() const {
    for (std::size_t i = layers.size(); i-- > 0;)
        if (layers[i].kind == LayerKind::conv) return i;
    return std::size_t(-1);
}

ParamCount param_count(const NetworkSpec& spec) {
    const std::vector<Shape4> shapes = spec.output_shapes(1);
    ParamCount count;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& ls = spec.layers[i];
        const Shape4 in = i == 0 ? Shape4{1, spec.in_channels, spec.in_size, spec.in_size}
                                 : shapes[i - 1];
        switch (ls.kind) {
            case LayerKind::conv:
                count.trainable += std::size_t(ls.channels) * in.c * std::size_t(ls.kernel) *
                                       std::size_t(ls.kernel) +
                                   std::size_t(ls.channels);
                break;
            case LayerKind::batchnorm:
                count.trainable += 2 * in.c;      // gamma, beta
                count.non_trainable += 2 * in.c;  // moving mean, moving var
                break;
            case LayerKind::dense:
                count.trainable += std::size_t(ls.channels) * in.c + std::size_t(ls.channels);
                break;
            default:
                break;
        }
    }
    count.total = count.trainable + count.non_trainable;
    return count;
}

} // namespace dcnn
