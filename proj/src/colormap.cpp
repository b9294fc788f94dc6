#include "dcnn/interpret.hpp"

namespace dcnn {

namespace {

// Piecewise-linear ramp over three 85-step segments. 255/85 = 3 exactly,
// so every entry is plain integer arithmetic; see docs/colormap.md.
std::array<std::array<std::uint8_t, 3>, 256> make_ramp() {
    std::array<std::array<std::uint8_t, 3>, 256> ramp{};
    for (int i = 0; i < 256; ++i) {
        std::uint8_t r, g, b;
        if (i <= 85) {
            r = 0;
            g = std::uint8_t(3 * i);
            b = std::uint8_t(255 - 3 * i);
        } else if (i <= 170) {
            r = std::uint8_t(3 * (i - 85));
            g = 255;
            b = 0;
        } else {
            r = 255;
            g = std::uint8_t(255 - 3 * (i - 170));
            b = 0;
        }
        ramp[std::size_t(i)] = {r, g, b};
    }
    return ramp;
}

} // namespace

const std::array<std::array<std::uint8_t, 3>, 256> kColorRamp = make_ramp();

} // namespace dcnn
