#ifndef DCNN_LAYERS_IMPL_HPP
#define DCNN_LAYERS_IMPL_HPP

// Template bodies for layers.hpp. The convolution and pooling loops are
// the hot path of the whole library; they are written so the innermost
// loop runs over contiguous output or input rows.

#include <algorithm>
#include <cstdlib>

namespace dcnn {

namespace detail {

// Valid output range [lo, hi) along one axis so that y*stride - pad + k
// stays inside [0, in_extent).
inline void conv_axis_bounds(std::int64_t out_extent, std::int64_t in_extent, std::int64_t k,
                             std::int64_t stride, std::int64_t pad, std::int64_t& lo,
                             std::int64_t& hi) {
    lo = (k >= pad) ? 0 : (pad - k + stride - 1) / stride;
    std::int64_t last_in = in_extent - 1 + pad - k;
    hi = (last_in < 0) ? 0 : std::min<std::int64_t>(out_extent, last_in / stride + 1);
    if (hi < lo) hi = lo;
}

template <typename T>
inline T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
inline T softplus(T x) {
    if (x > T(20)) return x;           // log1p(exp(x)) ~ x
    if (x < T(-20)) return std::exp(x); // log1p(exp(x)) ~ exp(x)
    return std::log1p(std::exp(x));
}

// tanh(softplus(x)) = (u^2 - 1) / (u^2 + 1) with u = 1 + e^x: one exp
// instead of exp + log1p + tanh. The tails keep the asymptotics exact
// where u^2 loses the tiny e^x term.
template <typename T>
inline T tanh_softplus(T x) {
    if (x > T(20)) return T(1);
    if (x < T(-20)) return std::exp(x);
    const T u = T(1) + std::exp(x);
    const T uu = u * u;
    return (uu - T(1)) / (uu + T(1));
}

} // namespace detail

template <typename T>
void validate_conv(const Tensor<T>& input, const ConvParams<T>& p) {
    const Shape4& is = input.shape();
    const Shape4& ks = p.kernels.shape();
    if (p.stride < 1) throw ConfigError("conv stride must be >= 1");
    if (p.padding < 0) throw ConfigError("conv padding must be >= 0");
    if (is.c != ks.c)
        throw ConfigError("conv input channels mismatch: input " + is.str() + " vs kernels " +
                          ks.str());
    if (p.bias.size() != ks.n)
        throw ConfigError("conv bias length " + std::to_string(p.bias.size()) +
                          " does not match kernel count " + std::to_string(ks.n));
    conv_out_extent(is.h, ks.h, p.stride, p.padding);
    conv_out_extent(is.w, ks.w, p.stride, p.padding);
}

template <typename T>
Tensor<T> cross_correlate2d(const Tensor<T>& input, const ConvParams<T>& p) {
    validate_conv(input, p);
    const Shape4& is = input.shape();
    const Shape4& ks = p.kernels.shape();
    const std::size_t oh = conv_out_extent(is.h, ks.h, p.stride, p.padding);
    const std::size_t ow = conv_out_extent(is.w, ks.w, p.stride, p.padding);
    Tensor<T> out(Shape4{is.n, ks.n, oh, ow});

    const std::int64_t s = p.stride, pad = p.padding;
    const std::int64_t W = static_cast<std::int64_t>(is.w);

    // Blocks of OB output channels share every input load; the kernel
    // taps sit in registers while the x loop streams rows.
    const auto run_block = [&]<int OB>(std::size_t n, std::size_t o) {
        T* outp[OB];
        for (int t = 0; t < OB; ++t) {
            outp[t] = out.plane(n, o + t);
            std::fill(outp[t], outp[t] + oh * ow, p.bias[o + t]);
        }
        for (std::size_t c = 0; c < ks.c; ++c) {
            const T* inp = input.plane(n, c);
            const T* kp[OB];
            for (int t = 0; t < OB; ++t) kp[t] = p.kernels.plane(o + t, c);
            for (std::size_t i = 0; i < ks.h; ++i) {
                std::int64_t ylo, yhi;
                detail::conv_axis_bounds(oh, is.h, i, s, pad, ylo, yhi);
                for (std::size_t j = 0; j < ks.w; ++j) {
                    T kv[OB];
                    for (int t = 0; t < OB; ++t) kv[t] = kp[t][i * ks.w + j];
                    std::int64_t xlo, xhi;
                    detail::conv_axis_bounds(ow, W, j, s, pad, xlo, xhi);
                    for (std::int64_t y = ylo; y < yhi; ++y) {
                        const T* in_row = inp + (y * s - pad + i) * W;
                        T* out_row[OB];
                        for (int t = 0; t < OB; ++t)
                            out_row[t] = outp[t] + y * static_cast<std::int64_t>(ow);
                        if (s == 1) {
                            const T* in_shift = in_row - pad + j;
                            for (std::int64_t x = xlo; x < xhi; ++x) {
                                const T v = in_shift[x];
                                for (int t = 0; t < OB; ++t) out_row[t][x] += kv[t] * v;
                            }
                        } else {
                            for (std::int64_t x = xlo; x < xhi; ++x) {
                                const T v = in_row[x * s - pad + j];
                                for (int t = 0; t < OB; ++t) out_row[t][x] += kv[t] * v;
                            }
                        }
                    }
                }
            }
        }
    };

    for (std::size_t n = 0; n < is.n; ++n) {
        std::size_t o = 0;
        for (; o + 4 <= ks.n; o += 4) run_block.template operator()<4>(n, o);
        for (; o < ks.n; ++o) run_block.template operator()<1>(n, o);
    }
    return out;
}

template <typename T>
Tensor<T> convolve2d(const Tensor<T>& input, const ConvParams<T>& p) {
    ConvParams<T> flipped{rot180(p.kernels), p.bias, p.stride, p.padding};
    return cross_correlate2d(input, flipped);
}

template <typename T>
ConvGrads<T> cross_correlate2d_backward(const Tensor<T>& input, const ConvParams<T>& p,
                                        const Tensor<T>& upstream) {
    validate_conv(input, p);
    const Shape4& is = input.shape();
    const Shape4& ks = p.kernels.shape();
    const std::size_t oh = conv_out_extent(is.h, ks.h, p.stride, p.padding);
    const std::size_t ow = conv_out_extent(is.w, ks.w, p.stride, p.padding);
    if (upstream.shape() != Shape4{is.n, ks.n, oh, ow})
        throw ConfigError("conv upstream shape " + upstream.shape().str() + " does not match " +
                          Shape4{is.n, ks.n, oh, ow}.str());

    ConvGrads<T> g{Tensor<T>(is), Tensor<T>(ks), std::vector<T>(ks.n, T(0))};
    const std::int64_t s = p.stride, pad = p.padding;
    const std::int64_t W = static_cast<std::int64_t>(is.w);

    // Kernel and bias gradients: per-tap dot products, accumulated in
    // fixed-width lanes so the reduction vectorizes deterministically.
    constexpr int kLanes = 8;
    const auto lane_dot = [](const T* a, const T* b, std::int64_t len) {
        T lanes[kLanes] = {};
        std::int64_t x = 0;
        for (; x + kLanes <= len; x += kLanes)
            for (int l = 0; l < kLanes; ++l) lanes[l] += a[x + l] * b[x + l];
        T sum = T(0);
        for (; x < len; ++x) sum += a[x] * b[x];
        for (int l = 0; l < kLanes; ++l) sum += lanes[l];
        return sum;
    };

    for (std::size_t n = 0; n < is.n; ++n) {
        for (std::size_t o = 0; o < ks.n; ++o) {
            const T* up = upstream.plane(n, o);
            T lanes[kLanes] = {};
            std::size_t i = 0;
            for (; i + kLanes <= oh * ow; i += kLanes)
                for (int l = 0; l < kLanes; ++l) lanes[l] += up[i + l];
            T acc = T(0);
            for (; i < oh * ow; ++i) acc += up[i];
            for (int l = 0; l < kLanes; ++l) acc += lanes[l];
            g.bias[o] += acc;

            for (std::size_t c = 0; c < ks.c; ++c) {
                const T* inp = input.plane(n, c);
                T* dkp = g.kernels.plane(o, c);
                for (std::size_t ki = 0; ki < ks.h; ++ki) {
                    std::int64_t ylo, yhi;
                    detail::conv_axis_bounds(oh, is.h, ki, s, pad, ylo, yhi);
                    for (std::size_t kj = 0; kj < ks.w; ++kj) {
                        std::int64_t xlo, xhi;
                        detail::conv_axis_bounds(ow, W, kj, s, pad, xlo, xhi);
                        T dk = T(0);
                        for (std::int64_t y = ylo; y < yhi; ++y) {
                            const T* up_row = up + y * static_cast<std::int64_t>(ow);
                            const std::int64_t in_base = (y * s - pad + ki) * W;
                            if (s == 1) {
                                dk += lane_dot(up_row + xlo, inp + in_base - pad + kj + xlo,
                                               xhi - xlo);
                            } else {
                                for (std::int64_t x = xlo; x < xhi; ++x)
                                    dk += up_row[x] * inp[in_base + x * s - pad + kj];
                            }
                        }
                        dkp[ki * ks.w + kj] += dk;
                    }
                }
            }
        }
    }

    // Input gradient: a second sweep so the scatter stays a pure
    // multiply-add stream, with blocks of output channels sharing each
    // upstream row read.
    const auto din_block = [&]<int OB>(std::size_t n, std::size_t o) {
        const T* up[OB];
        for (int t = 0; t < OB; ++t) up[t] = upstream.plane(n, o + t);
        for (std::size_t c = 0; c < ks.c; ++c) {
            T* dinp = g.input.plane(n, c);
            const T* kp[OB];
            for (int t = 0; t < OB; ++t) kp[t] = p.kernels.plane(o + t, c);
            for (std::size_t i = 0; i < ks.h; ++i) {
                std::int64_t ylo, yhi;
                detail::conv_axis_bounds(oh, is.h, i, s, pad, ylo, yhi);
                for (std::size_t j = 0; j < ks.w; ++j) {
                    T kv[OB];
                    for (int t = 0; t < OB; ++t) kv[t] = kp[t][i * ks.w + j];
                    std::int64_t xlo, xhi;
                    detail::conv_axis_bounds(ow, W, j, s, pad, xlo, xhi);
                    for (std::int64_t y = ylo; y < yhi; ++y) {
                        const std::int64_t in_base = (y * s - pad + i) * W;
                        const std::int64_t orow = y * static_cast<std::int64_t>(ow);
                        if (s == 1) {
                            T* din_shift = dinp + in_base - pad + j;
                            for (std::int64_t x = xlo; x < xhi; ++x) {
                                T add = kv[0] * up[0][orow + x];
                                for (int t = 1; t < OB; ++t) add += kv[t] * up[t][orow + x];
                                din_shift[x] += add;
                            }
                        } else {
                            for (std::int64_t x = xlo; x < xhi; ++x) {
                                const std::int64_t ix = in_base + x * s - pad + j;
                                T add = kv[0] * up[0][orow + x];
                                for (int t = 1; t < OB; ++t) add += kv[t] * up[t][orow + x];
                                dinp[ix] += add;
                            }
                        }
                    }
                }
            }
        }
    };
    for (std::size_t n = 0; n < is.n; ++n) {
        std::size_t o = 0;
        for (; o + 4 <= ks.n; o += 4) din_block.template operator()<4>(n, o);
        for (; o < ks.n; ++o) din_block.template operator()<1>(n, o);
    }
    return g;
}

template <typename T>
T feature_match_score(const Tensor<T>& window, const Tensor<T>& kernel) {
    const Shape4& ws = window.shape();
    if (ws != kernel.shape())
        throw ConfigError("feature match shapes differ: " + ws.str() + " vs " +
                          kernel.shape().str());
    if (ws.n != 1 || ws.c != 1)
        throw ConfigError("feature match expects single-plane tensors, got " + ws.str());
    T sum = T(0);
    for (std::size_t i = 0; i < window.size(); ++i) sum += window[i] * kernel[i];
    return sum / static_cast<T>(ws.h * ws.w);
}

// ---------------------------------------------------------------------
// Pooling

template <typename T>
PoolResult<T> pool2d(const Tensor<T>& input, PoolMode mode, int window, int stride) {
    const Shape4& is = input.shape();
    if (window < 1 || stride < 1) throw ConfigError("pool window and stride must be >= 1");
    if (static_cast<std::size_t>(window) > is.h || static_cast<std::size_t>(window) > is.w)
        throw ConfigError("pool window " + std::to_string(window) + " larger than input " +
                          is.str());
    const std::size_t oh = (is.h - window) / stride + 1;
    const std::size_t ow = (is.w - window) / stride + 1;

    PoolResult<T> r{Tensor<T>(Shape4{is.n, is.c, oh, ow}), {}};
    if (mode == PoolMode::max) r.argmax.resize(r.output.size());

    const T inv_area = T(1) / static_cast<T>(window * window);
    std::size_t oi = 0;
    for (std::size_t n = 0; n < is.n; ++n) {
        for (std::size_t c = 0; c < is.c; ++c) {
            const T* inp = input.plane(n, c);
            const std::size_t plane_base = is.index(n, c, 0, 0);
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t x = 0; x < ow; ++x, ++oi) {
                    const std::size_t iy0 = y * stride, ix0 = x * stride;
                    if (mode == PoolMode::max) {
                        std::size_t best = iy0 * is.w + ix0;
                        T bv = inp[best];
                        for (int i = 0; i < window; ++i)
                            for (int j = 0; j < window; ++j) {
                                std::size_t idx = (iy0 + i) * is.w + (ix0 + j);
                                if (inp[idx] > bv) {
                                    bv = inp[idx];
                                    best = idx;
                                }
                            }
                        r.output[oi] = bv;
                        r.argmax[oi] = static_cast<std::uint32_t>(plane_base + best);
                    } else {
                        T acc = T(0);
                        for (int i = 0; i < window; ++i)
                            for (int j = 0; j < window; ++j)
                                acc += inp[(iy0 + i) * is.w + (ix0 + j)];
                        r.output[oi] = acc * inv_area;
                    }
                }
            }
        }
    }
    return r;
}

template <typename T>
Tensor<T> pool2d_backward(const Shape4& input_shape, const PoolResult<T>& fwd, PoolMode mode,
                          int window, int stride, const Tensor<T>& upstream) {
    if (upstream.shape() != fwd.output.shape())
        throw ConfigError("pool upstream shape mismatch");
    Tensor<T> din(input_shape);
    if (mode == PoolMode::max) {
        for (std::size_t i = 0; i < upstream.size(); ++i) din[fwd.argmax[i]] += upstream[i];
        return din;
    }
    const Shape4& os = fwd.output.shape();
    const T inv_area = T(1) / static_cast<T>(window * window);
    std::size_t oi = 0;
    for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t c = 0; c < os.c; ++c) {
            T* dp = din.plane(n, c);
            for (std::size_t y = 0; y < os.h; ++y)
                for (std::size_t x = 0; x < os.w; ++x, ++oi) {
                    const T v = upstream[oi] * inv_area;
                    for (int i = 0; i < window; ++i)
                        for (int j = 0; j < window; ++j)
                            dp[(y * stride + i) * input_shape.w + (x * stride + j)] += v;
                }
        }
    return din;
}

// ---------------------------------------------------------------------
// Batch normalization

template <typename T>
BatchNormState<T> make_batch_norm(std::size_t channels, T momentum, T epsilon) {
    BatchNormState<T> s;
    s.gamma.assign(channels, T(1));
    s.beta.assign(channels, T(0));
    s.moving_mean.assign(channels, T(0));
    s.moving_var.assign(channels, T(1));
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
}

template <typename T>
Tensor<T> batch_norm_forward(const Tensor<T>& input, BatchNormState<T>& state, Mode mode,
                             BatchNormCache<T>* cache) {
    const Shape4& is = input.shape();
    if (is.c != state.gamma.size())
        throw ConfigError("batch norm channel mismatch: input " + is.str() + " vs state " +
                          std::to_string(state.gamma.size()));
    Tensor<T> out(is);
    const std::size_t plane = is.h * is.w;
    const std::size_t m = is.n * plane;  // reduction size per channel

    if (mode == Mode::inference) {
        for (std::size_t c = 0; c < is.c; ++c) {
            const T istd = T(1) / std::sqrt(state.moving_var[c] + state.epsilon);
            const T scale = state.gamma[c] * istd;
            const T shift = state.beta[c] - state.moving_mean[c] * scale;
            for (std::size_t n = 0; n < is.n; ++n) {
                const T* ip = input.plane(n, c);
                T* op = out.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) op[i] = scale * ip[i] + shift;
            }
        }
        return out;
    }

    if (cache) {
        cache->mean.assign(is.c, T(0));
        cache->var.assign(is.c, T(0));
        cache->normalized = Tensor<T>(is);
    }
    for (std::size_t c = 0; c < is.c; ++c) {
        T sum = T(0);
        for (std::size_t n = 0; n < is.n; ++n) {
            const T* ip = input.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) sum += ip[i];
        }
        const T mean = sum / static_cast<T>(m);
        T var_sum = T(0);
        for (std::size_t n = 0; n < is.n; ++n) {
            const T* ip = input.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                const T d = ip[i] - mean;
                var_sum += d * d;
            }
        }
        const T var = var_sum / static_cast<T>(m);  // biased, as in the moving average
        const T istd = T(1) / std::sqrt(var + state.epsilon);
        for (std::size_t n = 0; n < is.n; ++n) {
            const T* ip = input.plane(n, c);
            T* op = out.plane(n, c);
            T* xp = cache ? cache->normalized.plane(n, c) : nullptr;
            for (std::size_t i = 0; i < plane; ++i) {
                const T xh = (ip[i] - mean) * istd;
                if (xp) xp[i] = xh;
                op[i] = state.gamma[c] * xh + state.beta[c];
            }
        }
        state.moving_mean[c] = state.momentum * state.moving_mean[c] + (T(1) - state.momentum) * mean;
        state.moving_var[c] = state.momentum * state.moving_var[c] + (T(1) - state.momentum) * var;
        if (cache) {
            cache->mean[c] = mean;
            cache->var[c] = var;
        }
    }
    return out;
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const Tensor<T>& input, const BatchNormState<T>& state,
                                      Mode mode, const BatchNormCache<T>& cache,
                                      const Tensor<T>& upstream) {
    const Shape4& is = input.shape();
    if (upstream.shape() != is) throw ConfigError("batch norm upstream shape mismatch");
    BatchNormGrads<T> g{Tensor<T>(is), std::vector<T>(is.c, T(0)), std::vector<T>(is.c, T(0))};
    const std::size_t plane = is.h * is.w;
    const std::size_t m = is.n * plane;

    if (mode == Mode::inference) {
        // Moving statistics are constants here, so the map is affine.
        for (std::size_t c = 0; c < is.c; ++c) {
            const T istd = T(1) / std::sqrt(state.moving_var[c] + state.epsilon);
            T dg = T(0), db = T(0);
            for (std::size_t n = 0; n < is.n; ++n) {
                const T* up = upstream.plane(n, c);
                const T* ip = input.plane(n, c);
                T* dp = g.input.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) {
                    dg += up[i] * (ip[i] - state.moving_mean[c]) * istd;
                    db += up[i];
                    dp[i] = up[i] * state.gamma[c] * istd;
                }
            }
            g.gamma[c] = dg;
            g.beta[c] = db;
        }
        return g;
    }

    for (std::size_t c = 0; c < is.c; ++c) {
        const T istd = T(1) / std::sqrt(cache.var[c] + state.epsilon);
        T sum_up = T(0), sum_up_xh = T(0);
        for (std::size_t n = 0; n < is.n; ++n) {
            const T* up = upstream.plane(n, c);
            const T* xh = cache.normalized.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                sum_up += up[i];
                sum_up_xh += up[i] * xh[i];
            }
        }
        g.gamma[c] = sum_up_xh;
        g.beta[c] = sum_up;
        const T k = state.gamma[c] * istd / static_cast<T>(m);
        for (std::size_t n = 0; n < is.n; ++n) {
            const T* up = upstream.plane(n, c);
            const T* xh = cache.normalized.plane(n, c);
            T* dp = g.input.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i)
                dp[i] = k * (static_cast<T>(m) * up[i] - sum_up - xh[i] * sum_up_xh);
        }
    }
    return g;
}

// ---------------------------------------------------------------------
// Dropout

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate, Mode mode, SeededRng& rng) {
    if (rate < 0 || rate >= 1)
        throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
    if (mode == Mode::inference) return {input, {}};
    DropoutResult<T> r{Tensor<T>(input.shape()), std::vector<std::uint8_t>(input.size())};
    const T scale = T(1) / static_cast<T>(1.0 - rate);
    for (std::size_t i = 0; i < input.size(); ++i) {
        const bool keep = rng.uniform01() >= rate;
        r.mask[i] = keep;
        r.output[i] = keep ? input[i] * scale : T(0);
    }
    return r;
}

template <typename T>
Tensor<T> dropout_backward(const std::vector<std::uint8_t>& mask, double rate,
                           const Tensor<T>& upstream) {
    if (mask.empty()) return upstream;  // inference: identity
    if (mask.size() != upstream.size()) throw ConfigError("dropout mask size mismatch");
    Tensor<T> din(upstream.shape());
    const T scale = T(1) / static_cast<T>(1.0 - rate);
    for (std::size_t i = 0; i < upstream.size(); ++i)
        din[i] = mask[i] ? upstream[i] * scale : T(0);
    return din;
}

// ---------------------------------------------------------------------
// Dense

template <typename T>
void validate_dense(const Tensor<T>& input, const Tensor<T>& weights, std::size_t bias_len) {
    const Shape4& is = input.shape();
    const Shape4& ws = weights.shape();
    if (is.h != 1 || is.w != 1)
        throw ConfigError("dense input must be flattened to (n, features, 1, 1), got " + is.str());
    if (ws.h != 1 || ws.w != 1 || ws.c != is.c)
        throw ConfigError("dense weight shape " + ws.str() + " does not match input " + is.str());
    if (bias_len != ws.n)
        throw ConfigError("dense bias length " + std::to_string(bias_len) +
                          " does not match units " + std::to_string(ws.n));
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights,
                        const std::vector<T>& bias) {
    validate_dense(input, weights, bias.size());
    const std::size_t batch = input.shape().n;
    const std::size_t features = input.shape().c;
    const std::size_t units = weights.shape().n;
    Tensor<T> out(Shape4{batch, units, 1, 1});
    for (std::size_t n = 0; n < batch; ++n) {
        const T* x = input.data() + n * features;
        T* y = out.data() + n * units;
        for (std::size_t u = 0; u < units; ++u) {
            const T* w = weights.data() + u * features;
            T acc = bias[u];
            for (std::size_t f = 0; f < features; ++f) acc += w[f] * x[f];
            y[u] = acc;
        }
    }
    return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& upstream) {
    const std::size_t batch = input.shape().n;
    const std::size_t features = input.shape().c;
    const std::size_t units = weights.shape().n;
    if (upstream.shape() != Shape4{batch, units, 1, 1})
        throw ConfigError("dense upstream shape mismatch");
    DenseGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()),
                    std::vector<T>(units, T(0))};
    for (std::size_t n = 0; n < batch; ++n) {
        const T* x = input.data() + n * features;
        const T* up = upstream.data() + n * units;
        T* dx = g.input.data() + n * features;
        for (std::size_t u = 0; u < units; ++u) {
            const T uv = up[u];
            const T* w = weights.data() + u * features;
            T* dw = g.weights.data() + u * features;
            g.bias[u] += uv;
            for (std::size_t f = 0; f < features; ++f) {
                dw[f] += uv * x[f];
                dx[f] += uv * w[f];
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------
// Activations

template <typename T>
T activation_scalar(Activation kind, T x) {
    switch (kind) {
        case Activation::relu:
            return x > T(0) ? x : T(0);
        case Activation::gelu:
            return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475244)));
        case Activation::selu: {
            constexpr double lambda = 1.0507009873554804934193349852946;
            constexpr double alpha = 1.6732632423543772848170429916717;
            return x > T(0) ? T(lambda) * x : T(lambda * alpha) * (std::exp(x) - T(1));
        }
        case Activation::mish:
            return x * detail::tanh_softplus(x);
        case Activation::swish:
            return x * detail::sigmoid(x);
        case Activation::lisht:
            return x * std::tanh(x);
    }
    std::abort();
}

template <typename T>
T activation_derivative(Activation kind, T x) {
    switch (kind) {
        case Activation::relu:
            return x > T(0) ? T(1) : T(0);
        case Activation::gelu: {
            const T phi_cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
            const T phi_pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014326779);
            return phi_cdf + x * phi_pdf;
        }
        case Activation::selu: {
            constexpr double lambda = 1.0507009873554804934193349852946;
            constexpr double alpha = 1.6732632423543772848170429916717;
            return x > T(0) ? T(lambda) : T(lambda * alpha) * std::exp(x);
        }
        case Activation::mish: {
            if (x > T(20)) return T(1);
            const T e = std::exp(x);
            if (x < T(-20)) return e + x * e;  // ts ~ e, 1 - ts^2 ~ 1, sigmoid ~ e
            const T u = T(1) + e;
            const T uu = u * u;
            const T ts = (uu - T(1)) / (uu + T(1));
            return ts + x * (T(1) - ts * ts) * (e / u);
        }
        case Activation::swish: {
            const T s = detail::sigmoid(x);
            return s * (T(1) + x * (T(1) - s));
        }
        case Activation::lisht: {
            const T t = std::tanh(x);
            return t + x * (T(1) - t * t);
        }
    }
    std::abort();
}

template <typename T>
Tensor<T> apply_activation(Activation kind, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = activation_scalar(kind, x[i]);
    return out;
}

template <typename T>
Tensor<T> activation_backward(Activation kind, const Tensor<T>& x, const Tensor<T>& upstream) {
    if (upstream.shape() != x.shape()) throw ConfigError("activation upstream shape mismatch");
    Tensor<T> din(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        din[i] = upstream[i] * activation_derivative(kind, x[i]);
    return din;
}

// ---------------------------------------------------------------------
// Softmax cross-entropy

template <typename T>
SoftmaxXentResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                           const std::vector<int>& labels) {
    const Shape4& s = logits.shape();
    if (s.h != 1 || s.w != 1)
        throw ConfigError("softmax expects logits shaped (n, classes, 1, 1), got " + s.str());
    if (labels.size() != s.n)
        throw ConfigError("label count " + std::to_string(labels.size()) +
                          " does not match batch " + std::to_string(s.n));
    const std::size_t k = s.c;
    SoftmaxXentResult<T> r;
    r.probs = Tensor<T>(s);
    double loss_sum = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
        if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= k)
            throw ConfigError("label " + std::to_string(labels[n]) + " out of range [0," +
                              std::to_string(k) + ")");
        const T* z = logits.data() + n * k;
        T* p = r.probs.data() + n * k;
        T zmax = z[0];
        for (std::size_t i = 1; i < k; ++i) zmax = std::max(zmax, z[i]);
        T denom = T(0);
        for (std::size_t i = 0; i < k; ++i) {
            p[i] = std::exp(z[i] - zmax);
            denom += p[i];
        }
        for (std::size_t i = 0; i < k; ++i) p[i] /= denom;
        const std::size_t t = static_cast<std::size_t>(labels[n]);
        loss_sum -= static_cast<double>(z[t] - zmax) - std::log(static_cast<double>(denom));
    }
    r.loss = loss_sum / static_cast<double>(s.n);
    return r;
}

template <typename T>
Tensor<T> softmax_cross_entropy_backward(const SoftmaxXentResult<T>& fwd,
                                         const std::vector<int>& labels) {
    const Shape4& s = fwd.probs.shape();
    Tensor<T> d(s);
    const T inv_n = T(1) / static_cast<T>(s.n);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t i = 0; i < s.c; ++i) {
            const T onehot = (static_cast<std::size_t>(labels[n]) == i) ? T(1) : T(0);
            d[n * s.c + i] = (fwd.probs[n * s.c + i] - onehot) * inv_n;
        }
    return d;
}

} // namespace dcnn

#endif
