#pragma once

#include "flagdit/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace flagdit {

/// θ_d = base^(−2d/head_dim) for d = 0 .. head_dim/2 − 1.
struct RopeFrequencies {
    std::size_t head_dim = 0;
    double base = 10000.0;
    std::vector<double> theta;
};

RopeFrequencies build_freqs(std::size_t head_dim, double base = 10000.0);

/// Rotates each pair (v[2d], v[2d+1]) by position·θ_d, in place.
void apply_rope(std::span<real> v, double position, const RopeFrequencies& freqs);
std::vector<real> rotated(std::span<const real> v, double position, const RopeFrequencies& freqs);

/// Row-wise rotation of x[L, head_dim]; row i uses positions[i]. Differentiable.
Tensor rope_rows(const Tensor& x, std::span<const std::int64_t> positions,
                 const RopeFrequencies& freqs);

/// NTK-aware base for a context scale s = L'/L ≥ 1: b · s^(|D|/(|D|−2)).
double ntk_scale_base(double base, double scale, std::size_t head_dim);

} // namespace flagdit
