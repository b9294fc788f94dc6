#ifndef DCNN_TENSOR_HPP
#define DCNN_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dcnn/errors.hpp"

namespace dcnn {

// Extents of a rank-4 array in (batch, channel, row, column) order.
// Every activation, kernel stack and gradient in the library uses this
// layout; vectors are stored as (1, len, 1, 1).
struct Shape4 {
    std::size_t n = 1;
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t elems() const { return n * c * h * w; }

    // Offset of element (n,c,h,w) in row-major (n,c,h,w) storage.
    std::size_t index(std::size_t in, std::size_t ic, std::size_t ih, std::size_t iw) const {
        return ((in * c + ic) * h + ih) * w + iw;
    }

    bool operator==(const Shape4&) const = default;

    std::string str() const;
};

void validate_shape(const Shape4& s);

// Dense rank-4 tensor. T is float in the production stack; the gradient
// check tests instantiate the same code with double.
template <typename T>
class Tensor {
public:
    Tensor() : shape_{1, 1, 1, 1}, data_(1, T(0)) {}

    explicit Tensor(Shape4 shape, T fill = T(0)) : shape_(shape) {
        validate_shape(shape);
        data_.assign(shape.elems(), fill);
    }

    Tensor(Shape4 shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
        validate_shape(shape);
        if (data_.size() != shape.elems())
            throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape.str());
    }

    const Shape4& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[shape_.index(n, c, h, w)];
    }
    T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[shape_.index(n, c, h, w)];
    }

    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    // Pointer to the start of one (h, w) plane.
    T* plane(std::size_t n, std::size_t c) { return data_.data() + shape_.index(n, c, 0, 0); }
    const T* plane(std::size_t n, std::size_t c) const {
        return data_.data() + shape_.index(n, c, 0, 0);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor&) const = default;

private:
    Shape4 shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Reinterprets the data under a new shape with the same element count.
// Storage order is untouched, so flatten/reshape round trips are bitwise.
template <typename T>
Tensor<T> reshape(const Tensor<T>& t, Shape4 shape) {
    validate_shape(shape);
    if (shape.elems() != t.size())
        throw ConfigError("reshape from " + t.shape().str() + " to " + shape.str() +
                          " changes element count");
    return Tensor<T>(shape, std::vector<T>(t.data(), t.data() + t.size()));
}

// Collapses each batch item to a (c*h*w, 1, 1) column in (c,h,w) order.
template <typename T>
Tensor<T> flatten(const Tensor<T>& t) {
    const Shape4& s = t.shape();
    return reshape(t, Shape4{s.n, s.c * s.h * s.w, 1, 1});
}

// Reverses both spatial axes of every (n,c) plane. Applying it twice is
// the identity; convolve2d is defined as cross-correlation after rot180.
template <typename T>
Tensor<T> rot180(const Tensor<T>& t) {
    const Shape4& s = t.shape();
    Tensor<T> out(s);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* src = t.plane(n, c);
            T* dst = out.plane(n, c);
            const std::size_t m = s.h * s.w;
            for (std::size_t i = 0; i < m; ++i) dst[i] = src[m - 1 - i];
        }
    return out;
}

// xoshiro256++ seeded with splitmix64. The algorithm is fixed here (not a
// platform facility) so that a given seed produces the same stream of
// draws on every machine; shuffles, dropout masks and weight init all
// depend on that. References: Blackman & Vigna, "Scrambled linear
// pseudorandom number generators" (xoshiro256++), and Steele et al.
// (splitmix64).
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    // Uniform double in [0, 1) using the top 53 bits of one draw.
    double uniform01();

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    // Uniform integer in [0, bound) via the 128-bit multiply-shift
    // reduction (Lemire). bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound);

    // Deterministic derived generator for an independent stream, e.g.
    // per-epoch shuffles keyed by (seed, tag).
    SeededRng derive(std::uint64_t tag) const;

    // Fisher-Yates using next_below, most significant index first.
    template <typename V>
    void shuffle(V& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
};

// Tensor blob wire format (checkpoints): four little-endian u64 extents
// (n,c,h,w) followed by the elements as little-endian IEEE-754 binary32.
void write_tensor_blob(std::ostream& out, const TensorF& t);
TensorF read_tensor_blob(std::istream& in);

} // namespace dcnn

#endif
