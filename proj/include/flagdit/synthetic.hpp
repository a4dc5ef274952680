#pragma once

#include "flagdit/codec.hpp"
#include "flagdit/trainer.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace flagdit {

struct MixtureData {
    Tensor points;  // [n, 2]
    std::vector<std::size_t> labels;
};

inline constexpr double kMixtureSigma = 0.1;

/// n points from K isotropic Gaussians (σ = 0.1) centred at angle 2πk/K on a
/// circle of radius r.
MixtureData make_2d_mixture(std::size_t n, std::size_t K, double r, std::uint64_t seed);

/// Each point as a 1×1×1×2 grid (one PATCH token at p = 1); prompt = label + 1.
std::vector<Example> mixture_examples(const MixtureData& data);

/// Label ids double as prompt tokens; 0 stays reserved for "no prompt".
enum class PatternClass : std::size_t {
    HStripes = 1,
    VStripes = 2,
    Checker = 3,
    Disk = 4,
    Gradient = 5,
};

inline constexpr PatternClass kPatternClasses[] = {PatternClass::HStripes, PatternClass::VStripes,
                                                   PatternClass::Checker, PatternClass::Disk,
                                                   PatternClass::Gradient};

std::string to_string(PatternClass c);
PatternClass parse_pattern_class(std::string_view name);
PatternClass pattern_class_from_id(std::size_t id);

/// Single-channel pattern in [-1, 1]. With `jitter` the stripe/checker phase,
/// disk centre/radius and gradient sign are drawn from `seed`; without it the
/// canonical pattern is produced.
LatentFrameGrid make_pattern_image(PatternClass cls, std::size_t height, std::size_t width,
                                   std::size_t period, std::uint64_t seed, bool jitter = true);

/// n_per_class jittered images of every class, classes interleaved.
std::vector<Example> pattern_examples(std::size_t n_per_class, std::size_t height,
                                      std::size_t width, std::size_t period, std::size_t patch,
                                      std::uint64_t seed);

/// Folded (fy, fx) of the strongest non-DC DFT bin of frame 0, channel 0.
std::pair<std::size_t, std::size_t> dominant_frequency(const LatentFrameGrid& grid);

/// Closed-form classifier over the DFT magnitude spectrum.
PatternClass classify_pattern(const LatentFrameGrid& grid);

} // namespace flagdit
