#include "flagdit/sampler.hpp"

#include "flagdit/errors.hpp"

#include <cmath>

namespace flagdit {

void SamplerConfig::validate() const {
    if (steps < 1) throw ConfigError("sampler: steps must be at least 1");
    if (!(shift >= 1.0)) throw ConfigError("sampler: shift must be >= 1");
    if (!(cfg_scale >= 0.0)) throw ConfigError("sampler: cfg scale must be >= 0");
    if (extrapolation_scale && !(*extrapolation_scale >= 1.0))
        throw ConfigError("sampler: extrapolation scale must be >= 1");
}

double time_shift(double t, double m) {
    if (!(m >= 1.0)) throw ConfigError("time shift m must be >= 1, got " + std::to_string(m));
    if (t < 0.0 || t > 1.0) throw ContractError("time shift expects t in [0, 1]");
    return t / (m - m * t + t);
}

std::vector<double> make_time_grid(std::size_t steps, double m) {
    if (steps < 1) throw ConfigError("time grid needs at least one step");
    std::vector<double> grid(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) grid[i] = time_shift(double(i) / double(steps), m);
    grid.front() = 0.0;
    grid.back() = 1.0;
    return grid;
}

double snr_pooled_noise_std(std::size_t m, std::size_t trials, Rng& rng) {
    if (m < 1 || trials < 2) throw ContractError("pooled noise needs m >= 1 and trials >= 2");
    std::normal_distribution<double> normal(0.0, 1.0);
    double sum = 0, sum_sq = 0;
    for (std::size_t k = 0; k < trials; ++k) {
        double pooled = 0;
        for (std::size_t i = 0; i < m * m; ++i) pooled += normal(rng);
        pooled /= double(m * m);
        sum += pooled;
        sum_sq += pooled * pooled;
    }
    const double mu = sum / double(trials);
    return std::sqrt(std::max(0.0, sum_sq / double(trials) - mu * mu));
}

Tensor cfg_velocity(const Tensor& v_cond, const Tensor& v_uncond, double w) {
    if (v_cond.shape() != v_uncond.shape())
        throw DimensionError("cfg: conditional " + shape_str(v_cond.shape()) +
                             " vs unconditional " + shape_str(v_uncond.shape()));
    if (w == 1.0) return v_cond.detach();
    if (w == 0.0) return v_uncond.detach();
    Tensor out(v_cond.shape());
    auto dst = out.mutable_data();
    auto c = v_cond.data(), u = v_uncond.data();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] = static_cast<real>(double(u[i]) + w * (double(c[i]) - double(u[i])));
    return out;
}

double proportional_scale(double train_length, double infer_length) {
    if (!(train_length > 1.0))
        throw ContractError("proportional attention needs L_train > 1");
    if (!(infer_length >= 1.0)) throw ContractError("proportional attention needs L_infer >= 1");
    if (infer_length <= train_length) return 1.0;
    return std::sqrt(std::log(infer_length) / std::log(train_length));
}

Tensor euler_step(const Tensor& x, const Tensor& v, double t0, double t1) {
    if (v.shape() != x.shape())
        throw DimensionError("velocity " + shape_str(v.shape()) + " does not match state " +
                             shape_str(x.shape()));
    const real dt = static_cast<real>(t1 - t0);
    Tensor next(x.shape());
    auto dst = next.mutable_data();
    auto xs = x.data(), vs = v.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = xs[j] + dt * vs[j];
    return next;
}

Tensor euler_integrate(const VelocityFn& velocity, Tensor x, std::span<const double> grid) {
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const Tensor v = velocity(x, grid[i]);
        x = euler_step(x, v, grid[i], grid[i + 1]);
    }
    return x;
}

std::span<const std::size_t> unconditional_prompt() {
    static const std::size_t ids[] = {0};
    return ids;
}

Tensor guided_velocity(const FlagDiT& model, const TokenSequence& skeleton, const Tensor& x,
                       double t, std::span<const std::size_t> prompt, double cfg_scale,
                       const ForwardOptions& cond_options, const ForwardOptions& uncond_options) {
    TokenSequence seq = skeleton;
    seq.payloads = x;
    if (cfg_scale == 1.0) return model.forward(seq, t, prompt, cond_options);
    if (cfg_scale == 0.0) return model.forward(seq, t, unconditional_prompt(), uncond_options);
    Tensor cond = model.forward(seq, t, prompt, cond_options);
    Tensor uncond = model.forward(seq, t, unconditional_prompt(), uncond_options);
    return cfg_velocity(cond, uncond, cfg_scale);
}

LatentFrameGrid euler_solve(const VelocityFn& velocity, const SequenceLayout& layout,
                            std::size_t channels, const SamplerConfig& config, Rng& rng) {
    config.validate();
    check_layout(layout);
    if (channels == 0) throw DimensionError("euler_solve: channels must be positive");
    NoGradGuard no_grad;
    const std::size_t pd = layout.patch * layout.patch * channels;
    TokenSequence out = make_sequence(layout, Tensor({layout.num_patches(), pd}));
    Tensor x = gaussian_like(out.payloads.shape(), rng);
    const std::vector<double> grid = make_time_grid(config.steps, config.shift);
    out.payloads = euler_integrate(velocity, x, grid);
    return unpatchify(decode_sequence(out), layout.patch);
}

LatentFrameGrid euler_solve(const FlagDiT& model, const SequenceLayout& layout,
                            std::span<const std::size_t> prompt, const SamplerConfig& config,
                            Rng& rng, const ForwardOptions& options) {
    config.validate();
    check_layout(layout);
    NoGradGuard no_grad;
    const TokenSequence skeleton =
        make_sequence(layout, Tensor({layout.num_patches(), model.config().patch_dim()}));
    Tensor x = gaussian_like(skeleton.payloads.shape(), rng);
    const std::vector<double> grid = make_time_grid(config.steps, config.shift);
    ForwardOptions uncond = options;
    uncond.routing = nullptr;
    x = euler_integrate(
        [&](const Tensor& state, double t) {
            return guided_velocity(model, skeleton, state, t, prompt, config.cfg_scale, options,
                                   uncond);
        },
        x, grid);
    TokenSequence out = skeleton;
    out.payloads = x;
    return unpatchify(decode_sequence(out), layout.patch);
}

ExtrapolationPlan plan_extrapolation(const FlagDiTConfig& model, std::size_t height,
                                     std::size_t width, std::size_t frames,
                                     const SamplerConfig& config) {
    ExtrapolationPlan plan;
    plan.layout = SequenceLayout{height, width, frames, model.patch};
    check_layout(plan.layout);
    plan.train_length = model.train_sequence_length();
    plan.infer_length = plan.layout.sequence_length();
    plan.scale = config.extrapolation_scale.value_or(double(plan.infer_length) /
                                                     double(plan.train_length));
    plan.rope_base = plan.scale > 1.0 ? ntk_scale_base(model.rope_base, plan.scale, model.head_dim())
                                      : model.rope_base;
    plan.prop_scale = config.proportional_attention
                          ? proportional_scale(double(plan.train_length), double(plan.infer_length))
                          : 1.0;
    return plan;
}

ForwardOptions ExtrapolationContext::options() const {
    ForwardOptions options;
    options.freqs = &freqs;
    options.prop_scale = plan.prop_scale;
    return options;
}

ExtrapolationContext make_extrapolation_context(const FlagDiT& model, std::size_t height,
                                                std::size_t width, std::size_t frames,
                                                const SamplerConfig& config) {
    ExtrapolationContext ctx;
    ctx.plan = plan_extrapolation(model.config(), height, width, frames, config);
    ctx.freqs = build_freqs(model.config().head_dim(), ctx.plan.rope_base);
    return ctx;
}

LatentFrameGrid extrapolate_sample(const FlagDiT& model, std::size_t height, std::size_t width,
                                   std::size_t frames, std::span<const std::size_t> prompt,
                                   const SamplerConfig& config, Rng& rng) {
    const ExtrapolationContext ctx = make_extrapolation_context(model, height, width, frames, config);
    return euler_solve(model, ctx.plan.layout, prompt, config, rng, ctx.options());
}

} // namespace flagdit
