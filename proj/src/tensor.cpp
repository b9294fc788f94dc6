#include "dcnn/tensor.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

namespace dcnn {

std::string Shape4::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

void validate_shape(const Shape4& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
        throw ConfigError("shape " + s.str() + " has a zero extent");
    std::size_t e = s.n;
    for (std::size_t d : {s.c, s.h, s.w}) {
        if (e > std::numeric_limits<std::size_t>::max() / d)
            throw ConfigError("shape " + s.str() + " element count overflows the index type");
        e *= d;
    }
}

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

} // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
}

std::uint64_t SeededRng::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double SeededRng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

std::uint64_t SeededRng::next_below(std::uint64_t bound) {
    using u128 = unsigned __int128;
    return static_cast<std::uint64_t>((u128(next_u64()) * u128(bound)) >> 64);
}

SeededRng SeededRng::derive(std::uint64_t tag) const {
    std::uint64_t x = seed_ ^ (0xA0761D6478BD642Full * (tag + 1));
    return SeededRng(splitmix64(x));
}

namespace {

void put_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw CheckpointTruncatedError("tensor blob: truncated extent header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

// Little-endian hosts (the only targets exercised) can write the float
// array directly; the byte swap path keeps the format well-defined
// elsewhere.
constexpr bool host_is_little_endian() {
    return std::endian::native == std::endian::little;
}

} // namespace

void write_tensor_blob(std::ostream& out, const TensorF& t) {
    const Shape4& s = t.shape();
    put_u64_le(out, s.n);
    put_u64_le(out, s.c);
    put_u64_le(out, s.h);
    put_u64_le(out, s.w);
    static_assert(sizeof(float) == 4);
    if (host_is_little_endian()) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * 4));
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, &t.data()[i], 4);
            unsigned char b[4];
            for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
            out.write(reinterpret_cast<const char*>(b), 4);
        }
    }
}

TensorF read_tensor_blob(std::istream& in) {
    Shape4 s;
    s.n = get_u64_le(in);
    s.c = get_u64_le(in);
    s.h = get_u64_le(in);
    s.w = get_u64_le(in);
    validate_shape(s);
    std::vector<float> values(s.elems());
    if (host_is_little_endian()) {
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * 4));
        if (!in) throw CheckpointTruncatedError("tensor blob: truncated data for shape " + s.str());
    } else {
        for (auto& v : values) {
            unsigned char b[4];
            in.read(reinterpret_cast<char*>(b), 4);
            if (!in)
                throw CheckpointTruncatedError("tensor blob: truncated data for shape " + s.str());
            std::uint32_t bits = 0;
            for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(b[k]) << (8 * k);
            std::memcpy(&v, &bits, 4);
        }
    }
    return TensorF(s, std::move(values));
}

} // namespace dcnn
