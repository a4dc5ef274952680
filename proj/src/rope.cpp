#include "flagdit/rope.hpp"

#include "flagdit/errors.hpp"

#include <cmath>

namespace flagdit {

RopeFrequencies build_freqs(std::size_t head_dim, double base) {
    if (head_dim == 0 || head_dim % 2 != 0)
        throw ConfigError("rotary head_dim must be even and positive, got " +
                          std::to_string(head_dim));
    if (!(base > 0)) throw ConfigError("rotary base must be positive");
    RopeFrequencies f;
    f.head_dim = head_dim;
    f.base = base;
    f.theta.resize(head_dim / 2);
    for (std::size_t d = 0; d < f.theta.size(); ++d)
        f.theta[d] = std::pow(base, -2.0 * double(d) / double(head_dim));
    return f;
}

namespace {

void rotate(real* v, double position, const RopeFrequencies& freqs, double direction) {
    for (std::size_t d = 0; d < freqs.theta.size(); ++d) {
        const double angle = direction * position * freqs.theta[d];
        const double c = std::cos(angle), s = std::sin(angle);
        const double a = v[2 * d], b = v[2 * d + 1];
        v[2 * d] = static_cast<real>(a * c - b * s);
        v[2 * d + 1] = static_cast<real>(a * s + b * c);
    }
}

void check_dim(std::size_t got, const RopeFrequencies& freqs) {
    if (got != freqs.head_dim)
        throw DimensionError("rope: vector width " + std::to_string(got) +
                             " does not match head_dim " + std::to_string(freqs.head_dim));
}

} // namespace

void apply_rope(std::span<real> v, double position, const RopeFrequencies& freqs) {
    check_dim(v.size(), freqs);
    rotate(v.data(), position, freqs, 1.0);
}

std::vector<real> rotated(std::span<const real> v, double position, const RopeFrequencies& freqs) {
    std::vector<real> out(v.begin(), v.end());
    apply_rope(std::span<real>(out), position, freqs);
    return out;
}

Tensor rope_rows(const Tensor& x, std::span<const std::int64_t> positions,
                 const RopeFrequencies& freqs) {
    if (x.rank() != 2) throw DimensionError("rope_rows expects [L, head_dim], got " +
                                            shape_str(x.shape()));
    check_dim(x.dim(1), freqs);
    const std::size_t rows = x.dim(0), d = x.dim(1);
    if (positions.size() != rows)
        throw DimensionError("rope_rows: " + std::to_string(positions.size()) +
                             " positions for " + std::to_string(rows) + " rows");
    std::vector<real> out(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < rows; ++i)
        rotate(out.data() + i * d, double(positions[i]), freqs, 1.0);
    std::vector<std::int64_t> pos(positions.begin(), positions.end());
    return detail::make_result(x.shape(), std::move(out), "rope", {x},
                               [pos = std::move(pos), freqs, rows, d](detail::Node& self) {
                                   // Rotation is orthogonal: the adjoint rotates back.
                                   std::vector<real> back = self.grad;
                                   for (std::size_t i = 0; i < rows; ++i)
                                       rotate(back.data() + i * d, double(pos[i]), freqs, -1.0);
                                   auto& g = self.inputs[0]->ensure_grad();
                                   for (std::size_t k = 0; k < g.size(); ++k) g[k] += back[k];
                               });
}

double ntk_scale_base(double base, double scale, std::size_t head_dim) {
    if (head_dim <= 2) throw ContractError("NTK scaling needs head_dim > 2");
    if (!(scale >= 1.0))
        throw ContractError("NTK scaling is defined for extrapolation (s >= 1), got s=" +
                            std::to_string(scale));
    const double D = double(head_dim);
    return base * std::pow(scale, D / (D - 2.0));
}

} // namespace flagdit
