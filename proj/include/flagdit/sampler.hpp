#pragma once

#include "flagdit/codec.hpp"
#include "flagdit/flow_match.hpp"
#include "flagdit/model.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace flagdit {

struct SamplerConfig {
    std::size_t steps = 50;
    double shift = 6.0;
    double cfg_scale = 4.0;
    // Overrides the L'/L ratio used for NTK base scaling when set.
    std::optional<double> extrapolation_scale;
    bool proportional_attention = true;

    void validate() const;
};

/// SNR-matching time remap t / (m − m·t + t). Identity at m = 1.
double time_shift(double t, double m);

/// {i/N} for i = 0..N pushed through time_shift(·, m); endpoints are exactly 0 and 1.
std::vector<double> make_time_grid(std::size_t steps, double m);

/// Monte-Carlo std of m×m-average-pooled unit normals (≈ 1/m).
double snr_pooled_noise_std(std::size_t m, std::size_t trials, Rng& rng);

/// v_uncond + w·(v_cond − v_uncond), exact at w = 0 and w = 1.
Tensor cfg_velocity(const Tensor& v_cond, const Tensor& v_uncond, double w);

/// c = sqrt(log_{L_train} L_infer), clamped to 1 when L_infer ≤ L_train.
double proportional_scale(double train_length, double infer_length);

using VelocityFn = std::function<Tensor(const Tensor& x, double t)>;

/// x + (t1 − t0)·v.
Tensor euler_step(const Tensor& x, const Tensor& v, double t0, double t1);

/// Explicit Euler over `grid`, velocity taken at each step's left endpoint.
Tensor euler_integrate(const VelocityFn& velocity, Tensor x, std::span<const double> grid);

/// Guided velocity of the model at (x, t) for a sequence skeleton.
Tensor guided_velocity(const FlagDiT& model, const TokenSequence& skeleton, const Tensor& x,
                       double t, std::span<const std::size_t> prompt, double cfg_scale,
                       const ForwardOptions& cond_options = {},
                       const ForwardOptions& uncond_options = {});

/// The unconditional prompt {0}.
std::span<const std::size_t> unconditional_prompt();

/// Draws ε for every patch token of `layout`, integrates the Flow ODE from
/// t = 0 to 1 on the shifted grid and decodes the result.
LatentFrameGrid euler_solve(const FlagDiT& model, const SequenceLayout& layout,
                            std::span<const std::size_t> prompt, const SamplerConfig& config,
                            Rng& rng, const ForwardOptions& options = {});

/// Same integration with an arbitrary velocity field over [Np, p·p·channels]
/// patch payloads in place of the model. No guidance is applied.
LatentFrameGrid euler_solve(const VelocityFn& velocity, const SequenceLayout& layout,
                            std::size_t channels, const SamplerConfig& config, Rng& rng);

struct ExtrapolationPlan {
    SequenceLayout layout;
    std::size_t train_length = 0;
    std::size_t infer_length = 0;
    double scale = 1.0;        // s = L'/L
    double rope_base = 0.0;    // NTK-scaled when s > 1
    double prop_scale = 1.0;   // proportional attention factor
};

ExtrapolationPlan plan_extrapolation(const FlagDiTConfig& model, std::size_t height,
                                     std::size_t width, std::size_t frames,
                                     const SamplerConfig& config);

/// Plan plus the rotary table its forward options point at.
struct ExtrapolationContext {
    ExtrapolationPlan plan;
    RopeFrequencies freqs;

    /// Options carrying the scaled rotary table and attention scale. Must not
    /// outlive this context.
    ForwardOptions options() const;
};

ExtrapolationContext make_extrapolation_context(const FlagDiT& model, std::size_t height,
                                                std::size_t width, std::size_t frames,
                                                const SamplerConfig& config);

/// Tuning-free sampling at an arbitrary resolution: new layout, NTK-scaled
/// rotary base, time-shifted grid and proportional attention.
LatentFrameGrid extrapolate_sample(const FlagDiT& model, std::size_t height, std::size_t width,
                                   std::size_t frames, std::span<const std::size_t> prompt,
                                   const SamplerConfig& config, Rng& rng);

} // namespace flagdit
