#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "dcnn/interpret.hpp"

using namespace dcnn;

namespace {

// conv(identity or stride-2) -> bn -> flatten -> dense(3) where the
// class-1 logit averages the top-left quadrant of the conv map.
NetworkF quadrant_net(std::size_t in_size, int stride) {
    NetworkSpec spec;
    spec.in_channels = 1;
    spec.in_size = in_size;
    spec.layers = {LayerSpec::conv(1, 1, stride, 0), LayerSpec::batchnorm(),
                   LayerSpec::flatten(), LayerSpec::dense(3)};
    SeededRng rng(31);
    NetworkF net = build_network<float>(spec, rng);
    net.layers[0].conv.kernels.fill(1.0f);
    net.layers[3].weights.fill(0.0f);
    std::fill(net.layers[3].bias.begin(), net.layers[3].bias.end(), 0.0f);
    for (std::size_t f : {std::size_t(0), std::size_t(1), std::size_t(4), std::size_t(5)})
        net.layers[3].weights.at(1, f, 0, 0) = 0.25f;
    return net;
}

double heat_sum(const Heatmap& h, std::size_t y0, std::size_t y1, std::size_t x0,
                std::size_t x1) {
    double sum = 0;
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) sum += h.at(y, x);
    return sum;
}

} // namespace

TEST_CASE("color ramp runs blue to green to yellow to red") {
    CHECK(kColorRamp[0] == std::array<std::uint8_t, 3>{0, 0, 255});
    CHECK(kColorRamp[85] == std::array<std::uint8_t, 3>{0, 255, 0});
    CHECK(kColorRamp[170] == std::array<std::uint8_t, 3>{255, 255, 0});
    CHECK(kColorRamp[255] == std::array<std::uint8_t, 3>{255, 0, 0});
    CHECK(kColorRamp[1] == std::array<std::uint8_t, 3>{0, 3, 252});
    CHECK(kColorRamp[86] == std::array<std::uint8_t, 3>{3, 255, 0});
    CHECK(kColorRamp[171] == std::array<std::uint8_t, 3>{255, 252, 0});
    for (int i = 1; i < 256; ++i) {
        CHECK(kColorRamp[std::size_t(i)][0] >= kColorRamp[std::size_t(i) - 1][0]);  // red rises
        CHECK(kColorRamp[std::size_t(i)][2] <= kColorRamp[std::size_t(i) - 1][2]);  // blue falls
    }
}

TEST_CASE("zero input renders every activation tile mid-gray") {
    SeededRng rng(7);
    NetworkF net = build_network<float>(NetworkSpec::reference(64), rng);
    const TensorF zero(Shape4{1, 3, 64, 64});

    const ActivationGrid grid = activation_grid(net, zero, 1);  // first conv
    CHECK(grid.channels == 8);
    CHECK(grid.cols == 3);
    CHECK(grid.rows == 3);
    CHECK(grid.tile_height == 64);
    CHECK(grid.image.width == 3 * 64);
    CHECK(grid.image.height == 3 * 64);

    // Conv of a zero image is its (zero) bias: constant everywhere.
    for (std::size_t c = 0; c < 8; ++c) {
        const Image tile = grid.tile(c);
        for (std::uint8_t px : tile.pixels) CHECK(px == 128);
    }
    // The unused ninth cell stays black.
    CHECK(grid.image.at(2 * 64 + 5, 2 * 64 + 5, 0) == 0);
}

TEST_CASE("sixteen channels tile as a four by four grid") {
    NetworkSpec spec;
    spec.in_channels = 1;
    spec.in_size = 8;
    spec.layers = {LayerSpec::conv(16), LayerSpec::batchnorm()};
    SeededRng rng(3);
    NetworkF net = build_network<float>(spec, rng);
    TensorF input(Shape4{1, 1, 8, 8});
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = float(i % 7) * 0.1f;

    const ActivationGrid grid = activation_grid(net, input, 0);
    CHECK(grid.rows == 4);
    CHECK(grid.cols == 4);
    CHECK(grid.image.width == 4 * 8);
    CHECK(grid.image.height == 4 * 8);
}

TEST_CASE("activation grids only accept conv and pool layers") {
    SeededRng rng(5);
    NetworkF net = build_network<float>(NetworkSpec::reference(64), rng);
    const TensorF zero(Shape4{1, 3, 64, 64});
    CHECK_THROWS_WITH_AS(activation_grid(net, zero, 0), doctest::Contains("rescale"),
                         ConfigError);
    CHECK_THROWS_AS(activation_grid(net, zero, 2), ConfigError);   // batchnorm
    CHECK_THROWS_AS(activation_grid(net, zero, 99), ConfigError);  // out of range
    CHECK_THROWS_AS(activation_grid(net, TensorF(Shape4{2, 3, 64, 64}), 1), ConfigError);
}

TEST_CASE("horizontal-edge kernel lights up exactly the stripe boundary") {
    NetworkSpec spec;
    spec.in_channels = 1;
    spec.in_size = 8;
    spec.layers = {LayerSpec::conv(1), LayerSpec::batchnorm(), LayerSpec::act(Activation::relu),
                   LayerSpec::maxpool(2)};
    SeededRng rng(11);
    NetworkF net = build_network<float>(spec, rng);
    // Rows of -1 / 0 / +1: responds to dark-above-bright transitions.
    for (std::size_t x = 0; x < 3; ++x) {
        net.layers[0].conv.kernels.at(0, 0, 0, x) = -1.0f;
        net.layers[0].conv.kernels.at(0, 0, 1, x) = 0.0f;
        net.layers[0].conv.kernels.at(0, 0, 2, x) = 1.0f;
    }

    // Dark band rows 0..3, bright band rows 4..7: one rising edge.
    TensorF stripes(Shape4{1, 1, 8, 8});
    for (std::size_t y = 4; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) stripes.at(0, 0, y, x) = 1.0f;

    const ActivationGrid grid = activation_grid(net, stripes, 3);  // the pool output
    REQUIRE(grid.channels == 1);
    REQUIRE(grid.tile_height == 4);
    const Image tile = grid.tile(0);

    double edge_mass = 0, total_mass = 0;
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
            total_mass += tile.at(x, y, 0);
            if (y == 1 || y == 2) edge_mass += tile.at(x, y, 0);  // pooled boundary rows
        }
    REQUIRE(total_mass > 0);
    CHECK(edge_mass / total_mass >= 0.9);
    CHECK(*std::max_element(tile.pixels.begin(), tile.pixels.end()) == 255);
}

TEST_CASE("grad-cam mass lands in the quadrant the logit reads") {
    NetworkF net = quadrant_net(4, 1);
    TensorF input(Shape4{1, 1, 4, 4});
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x) input.at(0, 0, y, x) = 1.0f;

    const Heatmap heat = grad_cam(net, input, 1);
    CHECK(heat.height == 4);
    CHECK(heat.width == 4);
    const double inside = heat_sum(heat, 0, 2, 0, 2);
    const double everywhere = heat_sum(heat, 0, 4, 0, 4);
    REQUIRE(everywhere > 0);
    CHECK(inside / everywhere >= 0.99);  // map is exactly the quadrant here
    CHECK(*std::max_element(heat.values.begin(), heat.values.end()) == 1.0f);
}

TEST_CASE("grad-cam upsamples from a strided conv map and keeps its focus") {
    NetworkF net = quadrant_net(8, 2);
    TensorF input(Shape4{1, 1, 8, 8});
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) input.at(0, 0, y, x) = 1.0f;

    const Heatmap heat = grad_cam(net, input, 1);
    CHECK(heat.height == 8);
    CHECK(heat.width == 8);
    const double inside = heat_sum(heat, 0, 4, 0, 4);
    const double everywhere = heat_sum(heat, 0, 8, 0, 8);
    REQUIRE(everywhere > 0);
    CHECK(inside / everywhere >= 0.7);
    for (float v : heat.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("a constant logit yields an identically zero heatmap") {
    NetworkF net = quadrant_net(4, 1);  // class 2 weights are all zero
    TensorF input(Shape4{1, 1, 4, 4});
    input.fill(0.5f);

    const Heatmap heat = grad_cam(net, input, 2);
    for (float v : heat.values) CHECK(v == 0.0f);
}

TEST_CASE("heatmap contract holds on the reference network") {
    SeededRng rng(13);
    NetworkF net = build_network<float>(NetworkSpec::reference(64), rng);
    TensorF image(Shape4{1, 3, 64, 64});
    SeededRng pix(99);
    for (std::size_t i = 0; i < image.size(); ++i) image[i] = float(pix.uniform01());

    const Heatmap heat = grad_cam(net, image, 0);
    CHECK(heat.height == 64);
    CHECK(heat.width == 64);
    float peak = 0;
    for (float v : heat.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        peak = std::max(peak, v);
    }
    CHECK((peak == 0.0f || peak == 1.0f));
}

TEST_CASE("other classes' weights do not steer the target heatmap") {
    NetworkF net = quadrant_net(8, 2);
    TensorF input(Shape4{1, 1, 8, 8});
    SeededRng pix(44);
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = float(pix.uniform01());

    const Heatmap before = grad_cam(net, input, 1);
    for (std::size_t f = 0; f < 16; ++f) {
        net.layers[3].weights.at(0, f, 0, 0) = 10.0f;
        net.layers[3].weights.at(2, f, 0, 0) = -10.0f;
    }
    const Heatmap after = grad_cam(net, input, 1);
    CHECK(before.values == after.values);
}

TEST_CASE("upsampling keeps the hot spot within one source cell") {
    NetworkF net = quadrant_net(8, 2);
    // Weight every conv-map cell equally so the heatmap follows the input.
    net.layers[3].weights.fill(0.0f);
    for (std::size_t f = 0; f < 16; ++f) net.layers[3].weights.at(1, f, 0, 0) = 1.0f / 16;

    TensorF input(Shape4{1, 1, 8, 8});
    input.at(0, 0, 4, 6) = 1.0f;  // conv map hot cell (2, 3)

    const Heatmap heat = grad_cam(net, input, 1);
    std::size_t best = 0;
    for (std::size_t i = 1; i < heat.values.size(); ++i)
        if (heat.values[i] > heat.values[best]) best = i;
    const std::size_t by = best / heat.width;
    const std::size_t bx = best % heat.width;
    // Hot source cell (2,3) covers output rows 4..5, cols 6..7; allow one
    // cell of bilinear slack on each side.
    CHECK(by >= 3);
    CHECK(by <= 6);
    CHECK(bx >= 5);
    CHECK(bx <= 7);
}

TEST_CASE("grad-cam rejects nets without conv layers and bad class indices") {
    NetworkSpec spec;
    spec.in_channels = 3;
    spec.in_size = 1;
    spec.layers = {LayerSpec::flatten(), LayerSpec::dense(3)};
    SeededRng rng(2);
    NetworkF dense_only = build_network<float>(spec, rng);
    CHECK_THROWS_WITH_AS(grad_cam(dense_only, TensorF(Shape4{1, 3, 1, 1}), 0),
                         doctest::Contains("conv"), ConfigError);

    NetworkF net = quadrant_net(4, 1);
    CHECK_THROWS_AS(grad_cam(net, TensorF(Shape4{1, 1, 4, 4}), 3), ConfigError);
    CHECK_THROWS_AS(grad_cam(net, TensorF(Shape4{1, 1, 4, 4}), -1), ConfigError);
    CHECK_THROWS_AS(grad_cam(net, TensorF(Shape4{2, 1, 4, 4}), 0), ConfigError);
}

TEST_CASE("heatmap csv is a full-precision matrix") {
    Heatmap heat;
    heat.height = 2;
    heat.width = 3;
    heat.values = {0.0f, 0.25f, 1.0f, 0.125f, 0.5f, 0.75f};
    CHECK(heat.csv() == "0,0.25,1\n0.125,0.5,0.75\n");
}

TEST_CASE("alpha zero overlay returns the image untouched") {
    Image base(5, 4, 3);
    SeededRng rng(21);
    for (auto& p : base.pixels) p = std::uint8_t(rng.next_below(256));
    Heatmap heat;
    heat.height = 4;
    heat.width = 5;
    heat.values.assign(20, 0.0f);

    CHECK(overlay(base, heat, 0.0) == base);
}

TEST_CASE("full-strength heat blends toward the red ramp endpoint") {
    Image base(2, 1, 1);
    base.at(0, 0, 0) = 100;
    base.at(1, 0, 0) = 200;
    Heatmap heat;
    heat.height = 1;
    heat.width = 2;
    heat.values = {1.0f, 0.0f};

    const Image out = overlay(base, heat, 0.4);
    REQUIRE(out.channels == 3);
    // (1-a)*100 + a*255 = 162, greens/blues decay to (1-a)*100 = 60
    CHECK(out.at(0, 0, 0) == 162);
    CHECK(out.at(0, 0, 1) == 60);
    CHECK(out.at(0, 0, 2) == 60);
    // heat 0 maps to pure blue: (1-a)*200 = 120 for R and G
    CHECK(out.at(1, 0, 0) == 120);
    CHECK(out.at(1, 0, 1) == 120);
    CHECK(out.at(1, 0, 2) == 222);  // 0.6*200 + 0.4*255
}

TEST_CASE("overlay validates sizes and alpha") {
    Image base(4, 4, 1);
    Heatmap heat;
    heat.height = 3;
    heat.width = 4;
    heat.values.assign(12, 0.0f);
    CHECK_THROWS_WITH_AS(overlay(base, heat, 0.4), doctest::Contains("mismatch"), ConfigError);
    heat.height = 4;
    heat.values.assign(16, 0.0f);
    CHECK_THROWS_AS(overlay(base, heat, -0.1), ConfigError);
    CHECK_THROWS_AS(overlay(base, heat, 1.5), ConfigError);
}

TEST_CASE("overlay matches the committed golden render") {
    // 4x4 gray ramp under a diagonal heat gradient, alpha 0.4. The golden
    // file was produced by this exact recipe and reviewed by eye.
    Image base(4, 4, 1);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) base.at(x, y, 0) = std::uint8_t(16 * (4 * y + x));
    Heatmap heat;
    heat.height = 4;
    heat.width = 4;
    heat.values.resize(16);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) heat.values[y * 4 + x] = float(y + x) / 6.0f;

    const Image rendered = overlay(base, heat, 0.4);
    const Image golden = read_png(std::string(DCNN_TEST_DIR) + "/data/overlay_golden.png");
    CHECK(rendered == golden);
}
