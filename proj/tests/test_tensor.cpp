#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "dcnn/tensor.hpp"

using namespace dcnn;

TEST_CASE("element (n,c,h,w) lives at offset ((n*C + c)*H + h)*W + w") {
    Shape4 s{3, 4, 5, 6};
    TensorF t(s);
    // Encode the coordinates into the value, then read back through at().
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t h = 0; h < s.h; ++h)
                for (std::size_t w = 0; w < s.w; ++w)
                    CHECK(t.at(n, c, h, w) == static_cast<float>(((n * s.c + c) * s.h + h) * s.w + w));
}

TEST_CASE("shape validation rejects zero extents") {
    CHECK_THROWS_AS(TensorF(Shape4{0, 1, 1, 1}), ConfigError);
    CHECK_THROWS_AS(TensorF(Shape4{1, 1, 0, 1}), ConfigError);
    CHECK_THROWS_AS(validate_shape(Shape4{1u << 20, 1u << 20, 1u << 20, 1u << 20}), ConfigError);
}

TEST_CASE("flatten: (1,1,2,2) [1,2,3,4] -> (1,4,1,1) [1,2,3,4]") {
    TensorF t(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
    TensorF f = flatten(t);
    CHECK(f.shape() == Shape4{1, 4, 1, 1});
    for (std::size_t i = 0; i < 4; ++i) CHECK(f[i] == static_cast<float>(i + 1));
}

TEST_CASE("flatten: (2,3,4,4) -> (2,48,1,1)") {
    TensorF t(Shape4{2, 3, 4, 4});
    CHECK(flatten(t).shape() == Shape4{2, 48, 1, 1});
}

TEST_CASE("flatten then reshape back is bitwise identity") {
    SeededRng rng(7);
    TensorF t(Shape4{3, 2, 5, 5});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-10, 10));
    TensorF back = reshape(flatten(t), t.shape());
    CHECK(back == t);
}

TEST_CASE("reshape with different element count is rejected") {
    TensorF t(Shape4{1, 1, 2, 2});
    CHECK_THROWS_AS(reshape(t, Shape4{1, 1, 3, 2}), ConfigError);
}

TEST_CASE("rot180 on [[1,2],[3,4]] gives [[4,3],[2,1]]") {
    TensorF t(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
    TensorF r = rot180(t);
    CHECK(r[0] == 4);
    CHECK(r[1] == 3);
    CHECK(r[2] == 2);
    CHECK(r[3] == 1);
}

TEST_CASE("rot180 keeps centro-symmetric planes fixed") {
    TensorF t(Shape4{1, 1, 2, 2}, {1, 0, 0, 1});
    CHECK(rot180(t) == t);
}

TEST_CASE("rot180 is an involution") {
    SeededRng rng(11);
    TensorF t(Shape4{2, 3, 3, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-1, 1));
    CHECK(rot180(rot180(t)) == t);
}

TEST_CASE("equal seeds produce equal first 10000 draws") {
    SeededRng a(123456789), b(123456789);
    for (int i = 0; i < 10000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("the generator is the documented xoshiro256++ algorithm") {
    // First draws for seed 0, fixed by the splitmix64 seeding chain.
    // Frozen from an independent implementation of the two reference
    // algorithms; guards against drifting off the documented generator.
    SeededRng rng(0);
    CHECK(rng.next_u64() == 0x53175d61490b23dfull);
    CHECK(rng.next_u64() == 0x61da6f3dc380d507ull);
    CHECK(rng.next_u64() == 0x5c0fdf91ec9a7bfcull);
}

TEST_CASE("uniform01 stays in [0,1) and next_below in range") {
    SeededRng rng(42);
    for (int i = 0; i < 1000; ++i) {
        double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(rng.next_below(7) < 7);
    }
}

TEST_CASE("derive gives a distinct but reproducible stream") {
    SeededRng base(5);
    SeededRng d1 = base.derive(1);
    SeededRng d2 = base.derive(1);
    SeededRng d3 = base.derive(2);
    CHECK(d1.next_u64() == d2.next_u64());
    CHECK(d1.next_u64() != d3.next_u64());
}

TEST_CASE("tensor blob round trip is bitwise") {
    SeededRng rng(3);
    TensorF t(Shape4{2, 3, 4, 5});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-5, 5));
    std::stringstream ss;
    write_tensor_blob(ss, t);
    TensorF back = read_tensor_blob(ss);
    CHECK(back == t);
}

TEST_CASE("truncated blob is reported") {
    TensorF t(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
    std::stringstream ss;
    write_tensor_blob(ss, t);
    std::string bytes = ss.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_tensor_blob(cut), CheckpointTruncatedError);
}
