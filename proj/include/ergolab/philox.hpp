#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace ergolab {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Stateless: the output is a pure function of (counter, key).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key);

/// Gaussian noise addressed by (seed, stream, path, step). Any two calls with
/// the same address return the same numbers, whatever thread makes them.
class NoiseSource {
public:
    explicit NoiseSource(std::uint64_t seed, std::uint32_t stream = 0);

    /// Fills `out` with independent standard normals for one (path, step) cell.
    void normals(std::uint64_t path, std::uint64_t step, std::span<double> out) const;

    /// Uniforms on [0,1) for the same addressing scheme.
    void uniforms(std::uint64_t path, std::uint64_t step, std::span<double> out) const;

    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
    std::uint32_t stream_;
    PhiloxKey key_;
};

}  // namespace ergolab
