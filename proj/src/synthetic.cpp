#include "flagdit/synthetic.hpp"

#include "flagdit/errors.hpp"

#include <cmath>
#include <numbers>

namespace flagdit {

MixtureData make_2d_mixture(std::size_t n, std::size_t K, double r, std::uint64_t seed) {
    if (n < 1 || K < 1) throw ContractError("mixture needs n >= 1 and K >= 1");
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> mode(0, K - 1);
    std::normal_distribution<double> normal(0.0, kMixtureSigma);
    MixtureData out{Tensor({n, 2}), std::vector<std::size_t>(n)};
    auto p = out.points.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = mode(rng);
        const double angle = 2.0 * std::numbers::pi * double(k) / double(K);
        out.labels[i] = k;
        p[2 * i] = static_cast<real>(r * std::cos(angle) + normal(rng));
        p[2 * i + 1] = static_cast<real>(r * std::sin(angle) + normal(rng));
    }
    return out;
}

std::vector<Example> mixture_examples(const MixtureData& data) {
    std::vector<Example> out;
    const std::size_t n = data.points.dim(0);
    out.reserve(n);
    auto p = data.points.data();
    for (std::size_t i = 0; i < n; ++i) {
        LatentFrameGrid g = LatentFrameGrid::zeros(1, 1, 1, 2);
        g.at(0, 0, 0, 0) = p[2 * i];
        g.at(0, 0, 0, 1) = p[2 * i + 1];
        out.push_back(make_example(g, {data.labels[i] + 1}, 1));
    }
    return out;
}

std::string to_string(PatternClass c) {
    switch (c) {
    case PatternClass::HStripes: return "h-stripes";
    case PatternClass::VStripes: return "v-stripes";
    case PatternClass::Checker: return "checker";
    case PatternClass::Disk: return "disk";
    case PatternClass::Gradient: return "gradient";
    }
    return "unknown";
}

PatternClass parse_pattern_class(std::string_view name) {
    for (PatternClass c : kPatternClasses)
        if (to_string(c) == name) return c;
    throw ConfigError("unknown pattern class '" + std::string(name) + "'");
}

PatternClass pattern_class_from_id(std::size_t id) {
    if (id < 1 || id > std::size(kPatternClasses))
        throw ConfigError("unknown pattern class id " + std::to_string(id));
    return static_cast<PatternClass>(id);
}

LatentFrameGrid make_pattern_image(PatternClass cls, std::size_t height, std::size_t width,
                                   std::size_t period, std::uint64_t seed, bool jitter) {
    if (period < 2) throw ConfigError("pattern period must be at least 2");
    if (height < 1 || width < 1) throw DimensionError("pattern image must be non-empty");
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> phase(0, period - 1);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const std::size_t half = period / 2;
    const double h = double(height), w = double(width);

    std::size_t py = 0, px = 0;
    double cy = (h - 1) / 2, cx = (w - 1) / 2, radius = std::min(h, w) / 4, sign = 1;
    if (jitter) {
        py = phase(rng);
        px = phase(rng);
        cy += unit(rng) * h / 8;
        cx += unit(rng) * w / 8;
        radius *= 1.0 + 0.2 * unit(rng);
        sign = unit(rng) < 0 ? -1.0 : 1.0;
    }

    LatentFrameGrid g = LatentFrameGrid::zeros(height, width, 1, 1);
    auto band = [&](std::size_t v) { return (v / half) % 2 == 0 ? 1.0 : -1.0; };
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            double v = 0;
            switch (cls) {
            case PatternClass::HStripes: v = band(y + py); break;
            case PatternClass::VStripes: v = band(x + px); break;
            case PatternClass::Checker:
                v = ((y + py) / half + (x + px) / half) % 2 == 0 ? 1.0 : -1.0;
                break;
            case PatternClass::Disk: {
                const double dy = double(y) - cy, dx = double(x) - cx;
                v = dy * dy + dx * dx <= radius * radius ? 1.0 : -1.0;
                break;
            }
            case PatternClass::Gradient:
                v = width > 1 ? sign * (-1.0 + 2.0 * double(x) / (w - 1)) : 0.0;
                break;
            default: throw ConfigError("unknown pattern class");
            }
            g.at(y, x, 0, 0) = static_cast<real>(v);
        }
    }
    return g;
}

std::vector<Example> pattern_examples(std::size_t n_per_class, std::size_t height,
                                      std::size_t width, std::size_t period, std::size_t patch,
                                      std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Example> out;
    out.reserve(n_per_class * std::size(kPatternClasses));
    for (std::size_t i = 0; i < n_per_class; ++i) {
        for (PatternClass c : kPatternClasses) {
            const LatentFrameGrid g = make_pattern_image(c, height, width, period, rng());
            out.push_back(make_example(g, {static_cast<std::size_t>(c)}, patch));
        }
    }
    return out;
}

namespace {

/// |DFT|² of frame 0 / channel 0 after mean removal, folded to min(k, N − k).
std::vector<std::vector<double>> folded_power(const LatentFrameGrid& grid) {
    const std::size_t H = grid.height(), W = grid.width();
    double mean = 0;
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) mean += grid.at(y, x, 0, 0);
    mean /= double(H * W);

    std::vector<std::vector<double>> power(H / 2 + 1, std::vector<double>(W / 2 + 1, 0.0));
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t ky = 0; ky < H; ++ky) {
        for (std::size_t kx = 0; kx < W; ++kx) {
            double re = 0, im = 0;
            for (std::size_t y = 0; y < H; ++y) {
                for (std::size_t x = 0; x < W; ++x) {
                    const double a = -two_pi * (double(ky * y) / double(H) + double(kx * x) / double(W));
                    const double v = grid.at(y, x, 0, 0) - mean;
                    re += v * std::cos(a);
                    im += v * std::sin(a);
                }
            }
            power[std::min(ky, H - ky)][std::min(kx, W - kx)] += re * re + im * im;
        }
    }
    return power;
}

} // namespace

std::pair<std::size_t, std::size_t> dominant_frequency(const LatentFrameGrid& grid) {
    const auto power = folded_power(grid);
    std::pair<std::size_t, std::size_t> best{0, 0};
    double best_power = -1;
    for (std::size_t fy = 0; fy < power.size(); ++fy)
        for (std::size_t fx = 0; fx < power[fy].size(); ++fx)
            if ((fy || fx) && power[fy][fx] > best_power) {
                best_power = power[fy][fx];
                best = {fy, fx};
            }
    return best;
}

PatternClass classify_pattern(const LatentFrameGrid& grid) {
    const auto [fy, fx] = dominant_frequency(grid);
    if (fy >= 2 && fx >= 2) return PatternClass::Checker;
    if (fy >= 2) return PatternClass::HStripes;
    if (fx >= 2) return PatternClass::VStripes;
    const auto power = folded_power(grid);
    auto at = [&](std::size_t y, std::size_t x) {
        return y < power.size() && x < power[y].size() ? power[y][x] : 0.0;
    };
    const double horizontal = at(0, 1) + at(0, 2);
    const double vertical = at(1, 0) + at(2, 0);
    return horizontal > 4 * vertical ? PatternClass::Gradient : PatternClass::Disk;
}

} // namespace flagdit
