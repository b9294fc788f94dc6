#include "dcnn/layers.hpp"

namespace dcnn {

std::size_t conv_out_extent(std::size_t in, std::size_t k, int stride, int padding) {
    const std::int64_t padded = static_cast<std::int64_t>(in) + 2 * padding;
    const std::int64_t span = padded - static_cast<std::int64_t>(k);
    if (span < 0)
        throw ConfigError("kernel extent " + std::to_string(k) + " exceeds padded input " +
                          std::to_string(padded));
    return static_cast<std::size_t>(span / stride + 1);
}

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "gelu") return Activation::gelu;
    if (name == "selu") return Activation::selu;
    if (name == "mish") return Activation::mish;
    if (name == "swish") return Activation::swish;
    if (name == "lisht") return Activation::lisht;
    throw ConfigError("unknown activation '" + name +
                      "' (expected relu|gelu|selu|mish|swish|lisht)");
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::gelu: return "gelu";
        case Activation::selu: return "selu";
        case Activation::mish: return "mish";
        case Activation::swish: return "swish";
        case Activation::lisht: return "lisht";
    }
    return "?";
}

} // namespace dcnn
