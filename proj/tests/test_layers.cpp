#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dcnn/layers.hpp"
#include "support/gradcheck.hpp"

using namespace dcnn;
using dcnn_tests::fill_uniform;

namespace {

// Quadruple-loop reference written before the production kernel; reads
// out-of-range input as zero and accumulates per output cell.
TensorD xcorr_naive(const TensorD& in, const TensorD& k, const std::vector<double>& bias,
                    int stride, int pad) {
    const Shape4& is = in.shape();
    const Shape4& ks = k.shape();
    const std::size_t oh = (is.h + 2 * pad - ks.h) / stride + 1;
    const std::size_t ow = (is.w + 2 * pad - ks.w) / stride + 1;
    TensorD out(Shape4{is.n, ks.n, oh, ow});
    for (std::size_t n = 0; n < is.n; ++n)
        for (std::size_t o = 0; o < ks.n; ++o)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    double acc = bias[o];
                    for (std::size_t c = 0; c < ks.c; ++c)
                        for (std::size_t i = 0; i < ks.h; ++i)
                            for (std::size_t j = 0; j < ks.w; ++j) {
                                const long iy = static_cast<long>(y) * stride - pad + i;
                                const long ix = static_cast<long>(x) * stride - pad + j;
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(is.h) ||
                                    ix >= static_cast<long>(is.w))
                                    continue;
                                acc += in.at(n, c, iy, ix) * k.at(o, c, i, j);
                            }
                    out.at(n, o, y, x) = acc;
                }
    return out;
}

TensorD random_tensor(Shape4 s, SeededRng& rng) {
    TensorD t(s);
    fill_uniform(t, rng);
    return t;
}

} // namespace

TEST_CASE("1x1 identity kernel reproduces the input") {
    TensorD in(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
    ConvParams<double> p{TensorD(Shape4{1, 1, 1, 1}, {1}), {0}, 1, 0};
    CHECK(cross_correlate2d(in, p) == in);
}

TEST_CASE("all-ones 3x3 input with all-ones 2x2 kernel counts to fours") {
    TensorD in(Shape4{1, 1, 3, 3}, 1.0);
    ConvParams<double> p{TensorD(Shape4{1, 1, 2, 2}, 1.0), {0}, 1, 0};
    TensorD out = cross_correlate2d(in, p);
    CHECK(out.shape() == Shape4{1, 1, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(4.0));
}

TEST_CASE("cross-correlation matches the naive oracle on the spec shape") {
    SeededRng rng(21);
    TensorD in = random_tensor(Shape4{1, 3, 7, 7}, rng);
    TensorD k = random_tensor(Shape4{4, 3, 3, 3}, rng);
    std::vector<double> bias(4);
    fill_uniform(bias, rng);
    ConvParams<double> p{k, bias, 2, 1};
    TensorD got = cross_correlate2d(in, p);
    TensorD want = xcorr_naive(in, k, bias, 2, 1);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("shape mismatch names both shapes") {
    TensorD in(Shape4{1, 2, 4, 4});
    ConvParams<double> p{TensorD(Shape4{1, 3, 3, 3}), {0}, 1, 0};
    CHECK_THROWS_WITH_AS(cross_correlate2d(in, p),
                         doctest::Contains("(1,2,4,4)"), ConfigError);
}

TEST_CASE("convolution with a symmetric kernel equals cross-correlation") {
    SeededRng rng(4);
    TensorD in = random_tensor(Shape4{1, 1, 5, 5}, rng);
    ConvParams<double> p{TensorD(Shape4{1, 1, 3, 3}, 1.0), {0.5}, 1, 1};
    CHECK(convolve2d(in, p) == cross_correlate2d(in, p));
}

TEST_CASE("convolving with [[1,0],[0,0]] equals cross-correlating with [[0,0],[0,1]]") {
    SeededRng rng(5);
    TensorD in = random_tensor(Shape4{1, 1, 4, 4}, rng);
    ConvParams<double> conv_p{TensorD(Shape4{1, 1, 2, 2}, {1, 0, 0, 0}), {0}, 1, 0};
    ConvParams<double> xcorr_p{TensorD(Shape4{1, 1, 2, 2}, {0, 0, 0, 1}), {0}, 1, 0};
    CHECK(convolve2d(in, conv_p) == cross_correlate2d(in, xcorr_p));
}

TEST_CASE("convolve2d(x,k) = cross_correlate2d(x,rot180(k)) bitwise") {
    SeededRng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        TensorD in = random_tensor(Shape4{2, 3, 6, 5}, rng);
        TensorD k = random_tensor(Shape4{2, 3, 3, 2}, rng);
        std::vector<double> bias(2);
        fill_uniform(bias, rng);
        ConvParams<double> p{k, bias, 1, 1};
        ConvParams<double> flipped{rot180(k), bias, 1, 1};
        CHECK(convolve2d(in, p) == cross_correlate2d(in, flipped));
    }
}

TEST_CASE("padding p equals explicit zero border with padding 0") {
    SeededRng rng(7);
    TensorD in = random_tensor(Shape4{1, 2, 5, 5}, rng);
    TensorD k = random_tensor(Shape4{3, 2, 3, 3}, rng);
    std::vector<double> bias(3);
    fill_uniform(bias, rng);
    for (std::size_t pad : {1u, 2u}) {
        TensorD bordered(Shape4{1, 2, 5 + 2 * pad, 5 + 2 * pad});
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t y = 0; y < 5; ++y)
                for (std::size_t x = 0; x < 5; ++x)
                    bordered.at(0, c, y + pad, x + pad) = in.at(0, c, y, x);
        ConvParams<double> padded{k, bias, 1, int(pad)};
        ConvParams<double> plain{k, bias, 1, 0};
        CHECK(cross_correlate2d(in, padded) == cross_correlate2d(bordered, plain));
    }
}

TEST_CASE("shifting the input by stride shifts the pad-0 output by one cell") {
    SeededRng rng(8);
    for (int stride : {1, 2}) {
        TensorD in = random_tensor(Shape4{1, 1, 10, 10}, rng);
        TensorD shifted(Shape4{1, 1, 10, 10});
        for (std::size_t y = stride; y < 10; ++y)
            for (std::size_t x = stride; x < 10; ++x)
                shifted.at(0, 0, y, x) = in.at(0, 0, y - stride, x - stride);
        TensorD k = random_tensor(Shape4{1, 1, 3, 3}, rng);
        ConvParams<double> p{k, {0}, stride, 0};
        TensorD out = cross_correlate2d(in, p);
        TensorD out_shifted = cross_correlate2d(shifted, p);
        const std::size_t limit = (10 - 3) / stride;  // windows inside the copied region
        for (std::size_t y = 1; y <= limit; ++y)
            for (std::size_t x = 1; x <= limit; ++x)
                CHECK(out_shifted.at(0, 0, y, x) == doctest::Approx(out.at(0, 0, y - 1, x - 1)));
    }
}

TEST_CASE("feature match of a +-1 pattern with itself is 1, with its negation -1") {
    TensorD w(Shape4{1, 1, 3, 3}, {1, -1, 1, -1, 1, -1, 1, -1, 1});
    TensorD neg(Shape4{1, 1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) neg[i] = -w[i];
    CHECK(feature_match_score(w, w) == doctest::Approx(1.0));
    CHECK(feature_match_score(w, neg) == doctest::Approx(-1.0));
}

TEST_CASE("feature match agrees with the scalar hand sum over 9 pixels") {
    SeededRng rng(9);
    TensorD w(Shape4{1, 1, 3, 3}), k(Shape4{1, 1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) {
        w[i] = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        k[i] = rng.uniform01() < 0.5 ? -1.0 : 1.0;
    }
    double hand = 0;
    for (std::size_t i = 0; i < 9; ++i) hand += w[i] * k[i];
    hand /= 9.0;
    CHECK(feature_match_score(w, k) == doctest::Approx(hand));
    TensorD bad(Shape4{1, 1, 2, 2});
    CHECK_THROWS_AS(feature_match_score(w, bad), ConfigError);
}

TEST_CASE("2x2 window pooling of [[1,2],[3,4]]") {
    TensorD in(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
    auto mx = pool2d(in, PoolMode::max, 2, 2);
    auto av = pool2d(in, PoolMode::avg, 2, 2);
    CHECK(mx.output.shape() == Shape4{1, 1, 1, 1});
    CHECK(mx.output[0] == 4.0);
    CHECK(mx.argmax[0] == 3);
    CHECK(av.output[0] == doctest::Approx(2.5));
}

TEST_CASE("pooling matches a brute-force window scan") {
    SeededRng rng(10);
    TensorD in = random_tensor(Shape4{1, 2, 8, 8}, rng);
    auto mx = pool2d(in, PoolMode::max, 2, 2);
    auto av = pool2d(in, PoolMode::avg, 2, 2);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x) {
                double best = -1e300, sum = 0;
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        double v = in.at(0, c, 2 * y + i, 2 * x + j);
                        best = std::max(best, v);
                        sum += v;
                    }
                CHECK(mx.output.at(0, c, y, x) == best);
                CHECK(av.output.at(0, c, y, x) == doctest::Approx(sum / 4));
            }
}

TEST_CASE("avg pool never exceeds max pool on nonnegative inputs") {
    SeededRng rng(11);
    TensorD in(Shape4{2, 3, 7, 7});
    fill_uniform(in, rng, 0, 5);
    auto mx = pool2d(in, PoolMode::max, 3, 2);
    auto av = pool2d(in, PoolMode::avg, 3, 2);
    for (std::size_t i = 0; i < mx.output.size(); ++i) CHECK(av.output[i] <= mx.output[i]);
}

TEST_CASE("pool window larger than the input is rejected") {
    TensorD in(Shape4{1, 1, 2, 2});
    CHECK_THROWS_AS(pool2d(in, PoolMode::max, 3, 1), ConfigError);
}

TEST_CASE("inference batch norm with unit stats is the identity up to epsilon") {
    auto bn = make_batch_norm<double>(2, 0.99, 1e-3);
    SeededRng rng(12);
    TensorD in = random_tensor(Shape4{2, 2, 3, 3}, rng);
    TensorD out = batch_norm_forward(in, bn, Mode::inference);
    for (std::size_t i = 0; i < in.size(); ++i)
        CHECK(out[i] == doctest::Approx(in[i]).epsilon(1e-3));
}

TEST_CASE("training batch norm output has zero mean and unit variance per channel") {
    auto bn = make_batch_norm<double>(3, 0.99, 1e-9);
    SeededRng rng(13);
    TensorD in(Shape4{4, 3, 5, 5});
    fill_uniform(in, rng, -3, 7);
    TensorD out = batch_norm_forward(in, bn, Mode::training);
    const std::size_t m = 4 * 5 * 5;
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        for (std::size_t n = 0; n < 4; ++n)
            for (std::size_t i = 0; i < 25; ++i) mean += out.plane(n, c)[i];
        mean /= m;
        for (std::size_t n = 0; n < 4; ++n)
            for (std::size_t i = 0; i < 25; ++i) {
                double d = out.plane(n, c)[i] - mean;
                var += d * d;
            }
        var /= m;
        CHECK(std::fabs(mean) < 1e-5);
        CHECK(std::fabs(var - 1.0) < 1e-5);
    }
}

TEST_CASE("moving mean after one step: 0.9*0 + 0.1*2.5 = 0.25") {
    auto bn = make_batch_norm<double>(1, 0.9, 1e-3);
    TensorD in(Shape4{4, 1, 1, 1}, {1, 2, 3, 4});
    batch_norm_forward(in, bn, Mode::training);
    CHECK(bn.moving_mean[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("batch norm rejects channel mismatch") {
    auto bn = make_batch_norm<double>(2);
    TensorD in(Shape4{1, 3, 2, 2});
    CHECK_THROWS_AS(batch_norm_forward(in, bn, Mode::inference), ConfigError);
}

TEST_CASE("dropout rate 0 and inference mode are identities") {
    SeededRng rng(14);
    TensorD in = random_tensor(Shape4{2, 2, 3, 3}, rng);
    CHECK(dropout(in, 0.0, Mode::training, rng).output == in);
    CHECK(dropout(in, 0.7, Mode::inference, rng).output == in);
}

TEST_CASE("dropout at rate 0.5 on 1e5 ones keeps mean near 1 and zeros near half") {
    SeededRng rng(15);
    TensorD in(Shape4{1, 100000, 1, 1}, 1.0);
    auto r = dropout(in, 0.5, Mode::training, rng);
    double sum = 0;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < r.output.size(); ++i) {
        sum += r.output[i];
        if (r.output[i] == 0.0) ++zeros;
    }
    const double mean = sum / in.size();
    const double zero_frac = static_cast<double>(zeros) / in.size();
    CHECK(mean > 0.97);
    CHECK(mean < 1.03);
    CHECK(zero_frac > 0.49);
    CHECK(zero_frac < 0.51);
}

TEST_CASE("dense layer basics") {
    TensorD eye(Shape4{3, 3, 1, 1});
    for (int i = 0; i < 3; ++i) eye.at(i, i, 0, 0) = 1.0;
    TensorD in(Shape4{2, 3, 1, 1}, {1, 2, 3, 4, 5, 6});
    CHECK(dense_forward(in, eye, std::vector<double>(3, 0.0)) == in);

    TensorD zeros(Shape4{3, 3, 1, 1});
    TensorD out = dense_forward(in, zeros, {1, 2, 3});
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t u = 0; u < 3; ++u) CHECK(out.at(n, u, 0, 0) == doctest::Approx(u + 1.0));
}

TEST_CASE("dense 4->3 agrees with a hand matrix multiply") {
    SeededRng rng(16);
    TensorD w = random_tensor(Shape4{3, 4, 1, 1}, rng);
    TensorD x = random_tensor(Shape4{2, 4, 1, 1}, rng);
    std::vector<double> b(3);
    fill_uniform(b, rng);
    TensorD out = dense_forward(x, w, b);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t u = 0; u < 3; ++u) {
            double acc = b[u];
            for (std::size_t f = 0; f < 4; ++f) acc += w.at(u, f, 0, 0) * x.at(n, f, 0, 0);
            CHECK(out.at(n, u, 0, 0) == doctest::Approx(acc).epsilon(1e-6));
        }
    TensorD unflattened(Shape4{1, 4, 2, 1});
    CHECK_THROWS_AS(dense_forward(unflattened, w, b), ConfigError);
}

TEST_CASE("activation point values") {
    CHECK(activation_scalar(Activation::mish, 0.0) == 0.0);
    CHECK(activation_scalar(Activation::relu, -5.0) == 0.0);
    CHECK(activation_scalar(Activation::relu, 5.0) == 5.0);
    // 1*tanh(ln(1+e)), high-precision reference 0.86509838826731034
    CHECK(activation_scalar(Activation::mish, 1.0) ==
          doctest::Approx(0.86509838826731034).epsilon(1e-12));
}

TEST_CASE("mish is bounded below and approaches x for large x") {
    for (double x = -40; x <= 40; x += 0.01)
        CHECK(activation_scalar(Activation::mish, x) > -0.31);
    CHECK(activation_scalar(Activation::mish, 20.0) / 20.0 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("activations stay finite on extreme inputs") {
    for (auto kind : {Activation::relu, Activation::gelu, Activation::selu, Activation::mish,
                      Activation::swish, Activation::lisht})
        for (double x : {-1e4, -100.0, 0.0, 100.0, 1e4}) {
            CHECK(std::isfinite(activation_scalar(kind, x)));
            CHECK(std::isfinite(activation_derivative(kind, x)));
        }
}

TEST_CASE("activation parsing round trips and rejects junk") {
    for (auto kind : {Activation::relu, Activation::gelu, Activation::selu, Activation::mish,
                      Activation::swish, Activation::lisht})
        CHECK(parse_activation(activation_name(kind)) == kind);
    CHECK_THROWS_AS(parse_activation("softsign"), ConfigError);
}

TEST_CASE("uniform logits give uniform probabilities and loss ln 3") {
    TensorD logits(Shape4{2, 3, 1, 1}, 0.7);
    auto r = softmax_cross_entropy(logits, {0, 2});
    for (std::size_t i = 0; i < r.probs.size(); ++i)
        CHECK(r.probs[i] == doctest::Approx(1.0 / 3).epsilon(1e-9));
    CHECK(r.loss == doctest::Approx(1.0986122886681098).epsilon(1e-12));
}

TEST_CASE("softmax is stable for huge logits") {
    TensorD logits(Shape4{1, 3, 1, 1}, {1000, 0, 0});
    auto r = softmax_cross_entropy(logits, {0});
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r.probs[0] == doctest::Approx(1.0));
}

TEST_CASE("softmax matches an independent direct implementation") {
    SeededRng rng(17);
    TensorD logits(Shape4{5, 3, 1, 1});
    fill_uniform(logits, rng, -2, 2);
    std::vector<int> labels{0, 1, 2, 1, 0};
    auto r = softmax_cross_entropy(logits, labels);
    double want_loss = 0;
    for (std::size_t n = 0; n < 5; ++n) {
        double denom = 0;
        for (std::size_t i = 0; i < 3; ++i) denom += std::exp(logits[n * 3 + i]);
        double row_sum = 0;
        for (std::size_t i = 0; i < 3; ++i) {
            const double p = std::exp(logits[n * 3 + i]) / denom;
            CHECK(r.probs[n * 3 + i] == doctest::Approx(p).epsilon(1e-12));
            row_sum += r.probs[n * 3 + i];
        }
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-6));
        want_loss -= std::log(std::exp(logits[n * 3 + labels[n]]) / denom);
    }
    CHECK(r.loss == doctest::Approx(want_loss / 5).epsilon(1e-8));
}

TEST_CASE("softmax rejects out-of-range labels") {
    TensorD logits(Shape4{1, 3, 1, 1});
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {3}), ConfigError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1}), ConfigError);
}
