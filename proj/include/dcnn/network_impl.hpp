#ifndef DCNN_NETWORK_IMPL_HPP
#define DCNN_NETWORK_IMPL_HPP

// Template bodies for network.hpp. Include that header, not this one.

namespace dcnn {

namespace detail {

// He-uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)), drawn in storage order.
template <typename T>
void he_uniform(Tensor<T>& w, std::size_t fan_in, SeededRng& rng) {
    const double limit = std::sqrt(6.0 / double(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = T(rng.uniform(-limit, limit));
}

} // namespace detail

template <typename T>
Network<T> build_network(const NetworkSpec& spec, SeededRng& rng) {
    spec.validate();
    const std::vector<Shape4> shapes = spec.output_shapes(1);

    Network<T> net;
    net.spec = spec;
    net.init_seed = rng.seed();
    net.layers.resize(spec.layers.size());

    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& ls = spec.layers[i];
        Layer<T>& layer = net.layers[i];
        layer.spec = ls;
        const Shape4 in = i == 0 ? Shape4{1, spec.in_channels, spec.in_size, spec.in_size}
                                 : shapes[i - 1];
        switch (ls.kind) {
            case LayerKind::conv: {
                const std::size_t k = std::size_t(ls.kernel);
                layer.conv.kernels = Tensor<T>(Shape4{std::size_t(ls.channels), in.c, k, k});
                detail::he_uniform(layer.conv.kernels, in.c * k * k, rng);
                layer.conv.bias.assign(std::size_t(ls.channels), T(0));
                layer.conv.stride = ls.stride;
                layer.conv.padding = ls.padding;
                break;
            }
            case LayerKind::batchnorm:
                layer.bn = make_batch_norm<T>(in.c);
                break;
            case LayerKind::dense: {
                const std::size_t units = std::size_t(ls.channels);
                layer.weights = Tensor<T>(Shape4{units, in.c, 1, 1});
                detail::he_uniform(layer.weights, in.c, rng);
                layer.bias.assign(units, T(0));
                break;
            }
            default:
                break;  // parameterless kinds
        }
    }
    return net;
}

template <typename T>
ForwardResult<T> forward(Network<T>& net, const Tensor<T>& batch,
                         const std::vector<std::size_t>& capture, SeededRng* rng) {
    const Shape4& bs = batch.shape();
    if (bs.c != net.spec.in_channels || bs.h != net.spec.in_size || bs.w != net.spec.in_size)
        throw ConfigError("batch shape " + bs.str() + " does not match network input (" +
                          std::to_string(net.spec.in_channels) + "," +
                          std::to_string(net.spec.in_size) + "," +
                          std::to_string(net.spec.in_size) + ")");

    ForwardResult<T> result;
    Tensor<T> x = batch;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        Layer<T>& layer = net.layers[i];
        switch (layer.spec.kind) {
            case LayerKind::rescale: {
                const T s = T(layer.spec.scale);
                for (std::size_t j = 0; j < x.size(); ++j) x.data()[j] *= s;
                break;
            }
            case LayerKind::conv:
                x = cross_correlate2d(x, layer.conv);
                break;
            case LayerKind::batchnorm:
                x = batch_norm_forward(x, layer.bn, net.mode);
                break;
            case LayerKind::activation:
                x = apply_activation(layer.spec.activation, x);
                break;
            case LayerKind::maxpool:
                x = pool2d(x, PoolMode::max, layer.spec.window, layer.spec.window).output;
                break;
            case LayerKind::dropout:
                if (net.mode == Mode::training) {
                    if (!rng)
                        throw ConfigError("training-mode forward with dropout needs an rng");
                    x = dropout(x, layer.spec.rate, net.mode, *rng).output;
                }
                break;
            case LayerKind::flatten:
                x = flatten(x);
                break;
            case LayerKind::dense:
                x = dense_forward(x, layer.weights, layer.bias);
                break;
        }
        if (std::find(capture.begin(), capture.end(), i) != capture.end())
            result.captured.emplace(i, x);
    }
    result.logits = std::move(x);
    return result;
}

template <typename T>
BackwardResult<T> backward(Network<T>& net, const Tensor<T>& batch,
                           const std::vector<int>& labels, SeededRng& rng) {
    if (net.mode != Mode::training)
        throw ConfigError("backward requires training mode");
    if (labels.size() != batch.shape().n)
        throw ConfigError("label count " + std::to_string(labels.size()) +
                          " does not match batch size " + std::to_string(batch.shape().n));

    const std::size_t L = net.layers.size();

    // Forward, keeping each layer's input plus the caches backward needs.
    std::vector<Tensor<T>> inputs(L);
    std::vector<PoolResult<T>> pools(L);
    std::vector<BatchNormCache<T>> bn_caches(L);
    std::vector<std::vector<std::uint8_t>> masks(L);

    Tensor<T> x = batch;
    for (std::size_t i = 0; i < L; ++i) {
        Layer<T>& layer = net.layers[i];
        inputs[i] = x;
        switch (layer.spec.kind) {
            case LayerKind::rescale: {
                const T s = T(layer.spec.scale);
                for (std::size_t j = 0; j < x.size(); ++j) x.data()[j] *= s;
                break;
            }
            case LayerKind::conv:
                x = cross_correlate2d(x, layer.conv);
                break;
            case LayerKind::batchnorm:
                x = batch_norm_forward(x, layer.bn, Mode::training, &bn_caches[i]);
                break;
            case LayerKind::activation:
                x = apply_activation(layer.spec.activation, x);
                break;
            case LayerKind::maxpool: {
                pools[i] = pool2d(x, PoolMode::max, layer.spec.window, layer.spec.window);
                x = pools[i].output;
                break;
            }
            case LayerKind::dropout: {
                DropoutResult<T> d = dropout(x, layer.spec.rate, Mode::training, rng);
                masks[i] = std::move(d.mask);
                x = std::move(d.output);
                break;
            }
            case LayerKind::flatten:
                x = flatten(x);
                break;
            case LayerKind::dense:
                x = dense_forward(x, layer.weights, layer.bias);
                break;
        }
    }

    SoftmaxXentResult<T> loss = softmax_cross_entropy(x, labels);

    BackwardResult<T> result;
    result.loss = loss.loss;
    result.grads.resize(L);

    Tensor<T> up = softmax_cross_entropy_backward(loss, labels);
    result.probs = std::move(loss.probs);

    for (std::size_t ri = L; ri-- > 0;) {
        Layer<T>& layer = net.layers[ri];
        LayerGrads<T>& g = result.grads[ri];
        switch (layer.spec.kind) {
            case LayerKind::rescale: {
                const T s = T(layer.spec.scale);
                for (std::size_t j = 0; j < up.size(); ++j) up.data()[j] *= s;
                break;
            }
            case LayerKind::conv: {
                ConvGrads<T> cg = cross_correlate2d_backward(inputs[ri], layer.conv, up);
                g.weights = std::move(cg.kernels);
                g.bias = std::move(cg.bias);
                up = std::move(cg.input);
                break;
            }
            case LayerKind::batchnorm: {
                BatchNormGrads<T> bg = batch_norm_backward(inputs[ri], layer.bn, Mode::training,
                                                           bn_caches[ri], up);
                g.gamma = std::move(bg.gamma);
                g.beta = std::move(bg.beta);
                up = std::move(bg.input);
                break;
            }
            case LayerKind::activation:
                up = activation_backward(layer.spec.activation, inputs[ri], up);
                break;
            case LayerKind::maxpool:
                up = pool2d_backward(inputs[ri].shape(), pools[ri], PoolMode::max,
                                     layer.spec.window, layer.spec.window, up);
                break;
            case LayerKind::dropout:
                if (!masks[ri].empty()) up = dropout_backward(masks[ri], layer.spec.rate, up);
                break;
            case LayerKind::flatten:
                up = reshape(up, inputs[ri].shape());
                break;
            case LayerKind::dense: {
                DenseGrads<T> dg = dense_backward(inputs[ri], layer.weights, up);
                g.weights = std::move(dg.weights);
                g.bias = std::move(dg.bias);
                up = std::move(dg.input);
                break;
            }
        }
    }
    return result;
}

namespace detail {

template <typename T>
std::vector<ParamView<T>> collect_views(Network<T>& net, BackwardResult<T>* grads) {
    std::vector<ParamView<T>> views;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        Layer<T>& layer = net.layers[i];
        LayerGrads<T>* g = grads ? &grads->grads[i] : nullptr;
        const std::string prefix = "layer" + std::to_string(i) + ".";
        switch (layer.spec.kind) {
            case LayerKind::conv:
                views.push_back({prefix + "kernels", layer.conv.kernels.data(),
                                 g ? g->weights.data() : nullptr, layer.conv.kernels.size()});
                views.push_back({prefix + "bias", layer.conv.bias.data(),
                                 g ? g->bias.data() : nullptr, layer.conv.bias.size()});
                break;
            case LayerKind::batchnorm:
                views.push_back({prefix + "gamma", layer.bn.gamma.data(),
                                 g ? g->gamma.data() : nullptr, layer.bn.gamma.size()});
                views.push_back({prefix + "beta", layer.bn.beta.data(),
                                 g ? g->beta.data() : nullptr, layer.bn.beta.size()});
                break;
            case LayerKind::dense:
                views.push_back({prefix + "weights", layer.weights.data(),
                                 g ? g->weights.data() : nullptr, layer.weights.size()});
                views.push_back({prefix + "bias", layer.bias.data(),
                                 g ? g->bias.data() : nullptr, layer.bias.size()});
                break;
            default:
                break;
        }
    }
    return views;
}

} // namespace detail

template <typename T>
std::vector<ParamView<T>> param_views(Network<T>& net, BackwardResult<T>& grads) {
    if (grads.grads.size() != net.layers.size())
        throw ConfigError("gradient collection does not match network layer count");
    return detail::collect_views(net, &grads);
}

template <typename T>
std::vector<ParamView<T>> param_views(Network<T>& net) {
    return detail::collect_views<T>(net, nullptr);
}

} // namespace dcnn

#endif
