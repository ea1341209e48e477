#include "ergolab/philox.hpp"

#include <cmath>
#include <numbers>

namespace ergolab {

namespace {

constexpr std::uint32_t kMulA = 0xD2511F53u;
constexpr std::uint32_t kMulB = 0xCD9E8D57u;
constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(p);
    hi = static_cast<std::uint32_t>(p >> 32);
}

// 53-bit uniform from two 32-bit words.
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t lo0, hi0, lo1, hi1;
        mulhilo(kMulA, ctr[0], lo0, hi0);
        mulhilo(kMulB, ctr[2], lo1, hi1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeylA;
        key[1] += kWeylB;
    }
    return ctr;
}

NoiseSource::NoiseSource(std::uint64_t seed, std::uint32_t stream)
    : seed_(seed),
      stream_(stream),
      key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

void NoiseSource::uniforms(std::uint64_t path, std::uint64_t step, std::span<double> out) const {
    // Counter words: step, path (two words), block index | stream.
    std::uint32_t block = 0;
    for (std::size_t i = 0; i < out.size(); i += 2, ++block) {
        const PhiloxCounter r = philox4x32(
            {static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(path),
             static_cast<std::uint32_t>(path >> 32), (stream_ << 16) | block},
            key_);
        out[i] = to_unit(r[0], r[1]);
        if (i + 1 < out.size()) out[i + 1] = to_unit(r[2], r[3]);
    }
}

void NoiseSource::normals(std::uint64_t path, std::uint64_t step, std::span<double> out) const {
    std::uint32_t block = 0;
    for (std::size_t i = 0; i < out.size(); i += 2, ++block) {
        const PhiloxCounter r = philox4x32(
            {static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(path),
             static_cast<std::uint32_t>(path >> 32), (stream_ << 16) | block},
            key_);
        // Box-Muller; u1 in (0, 1] keeps the logarithm finite.
        const double u1 = to_unit(r[0], r[1]) + 0x1.0p-53;
        const double u2 = to_unit(r[2], r[3]);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        out[i] = radius * std::cos(angle);
        if (i + 1 < out.size()) out[i + 1] = radius * std::sin(angle);
    }
}

}  // namespace ergolab
