#include <doctest.h>

#include <cmath>
#include <vector>

#include "ergolab/philox.hpp"

using namespace ergolab;

TEST_CASE("philox4x32-10 known answers") {
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("noise cells are addressable and independent of call order") {
    const NoiseSource noise(42);
    std::vector<double> a(5), b(5), c(5);
    noise.normals(7, 3, a);
    noise.normals(8, 3, c);
    noise.normals(7, 3, b);
    CHECK(a == b);
    CHECK(a != c);
    const NoiseSource other_stream(42, 1);
    other_stream.normals(7, 3, c);
    CHECK(a != c);
}

TEST_CASE("normals have unit variance and zero mean") {
    const NoiseSource noise(2024);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    std::vector<double> z(2);
    for (int i = 0; i < n / 2; ++i) {
        noise.normals(i, 0, z);
        for (double v : z) {
            CHECK(std::isfinite(v));
            sum += v;
            sq += v * v;
        }
    }
    const double mean = sum / n;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
    CHECK(std::abs(sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("uniforms lie in [0, 1)") {
    const NoiseSource noise(9);
    std::vector<double> u(7);
    for (int i = 0; i < 1000; ++i) {
        noise.uniforms(i, 1, u);
        for (double v : u) {
            CHECK(v >= 0.0);
            CHECK(v < 1.0);
        }
    }
}
