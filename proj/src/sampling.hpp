#pragma once

#include <cmath>
#include <cstdint>

#include "ergolab/philox.hpp"
#include "ergolab/types.hpp"

namespace ergolab {

// Fixed stream for the sampled certificate checks on model data.
constexpr std::uint64_t kCheckSeed = 0x5eed'c0ffee'2024ull;
constexpr int kCheckSamples = 100;
constexpr double kCheckRadius = 10.0;

// Uniform point in the ball of radius kCheckRadius, addressed by (draw, slot).
inline Vec sample_ball(const NoiseSource& noise, std::uint64_t draw, std::uint64_t slot, int dim) {
    Vec direction(dim);
    noise.normals(draw, slot, {direction.data(), static_cast<std::size_t>(dim)});
    double u = 0.0;
    noise.uniforms(draw, slot + 1000, {&u, 1});
    const double norm = direction.norm();
    if (norm == 0.0) return Vec::Zero(dim);
    return direction / norm * (kCheckRadius * std::pow(u, 1.0 / dim));
}

inline bool within(double lhs, double rhs) { return lhs <= rhs * (1.0 + 1e-9) + 1e-12; }

}  // namespace ergolab
