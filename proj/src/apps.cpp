#include "flagdit/apps.hpp"

#include "flagdit/errors.hpp"

#include <cmath>
#include <string>

namespace flagdit {

namespace {

std::string box_str(const RegionBox& b) {
    return "(" + std::to_string(b.row0) + "," + std::to_string(b.col0) + "," +
           std::to_string(b.row1) + "," + std::to_string(b.col1) + ")";
}

bool overlaps(const RegionBox& a, const RegionBox& b) {
    return a.row0 < b.row1 && b.row0 < a.row1 && a.col0 < b.col1 && b.col0 < a.col1;
}

TokenSequence skeleton_for(const FlagDiT& model, const SequenceLayout& layout) {
    return make_sequence(layout, Tensor({layout.num_patches(), model.config().patch_dim()}));
}

LatentFrameGrid decode_payloads(TokenSequence skeleton, const Tensor& x) {
    skeleton.payloads = x;
    return unpatchify(decode_sequence(skeleton), skeleton.layout.patch);
}

} // namespace

CompositionPlan plan_composition(const std::vector<RegionPrompt>& regions,
                                 const SequenceLayout& layout) {
    if (regions.empty()) throw ContractError("compose: at least one region is required");
    check_layout(layout);
    const std::size_t rows = layout.rows(), cols = layout.cols();
    CompositionPlan plan;
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const RegionPrompt& region = regions[r];
        const RegionBox& b = region.box;
        if (b.row0 >= b.row1 || b.col0 >= b.col1)
            throw ContractError("compose: region " + std::to_string(r) + " box " + box_str(b) +
                                " is empty");
        if (b.row1 > rows || b.col1 > cols)
            throw ContractError("compose: region " + std::to_string(r) + " box " + box_str(b) +
                                " exceeds the " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " patch grid");
        for (std::size_t q = 0; q < r; ++q)
            if (overlaps(regions[q].box, b))
                throw ContractError("compose: regions " + std::to_string(q) + " and " +
                                    std::to_string(r) + " overlap");
        if (region.prompt.empty())
            throw ContractError("compose: region " + std::to_string(r) + " has an empty prompt");
        const std::size_t begin = plan.prompt.size();
        plan.prompt.insert(plan.prompt.end(), region.prompt.begin(), region.prompt.end());
        plan.routing.groups.emplace_back(begin, plan.prompt.size());
    }

    const TokenSequence skeleton = make_sequence(layout, Tensor({layout.num_patches(), 1}));
    plan.routing.token_group.assign(skeleton.size(), -1);
    const std::vector<std::size_t> patch_idx = skeleton.patch_indices();
    for (std::size_t k = 0; k < patch_idx.size(); ++k) {
        const std::size_t within = k % (rows * cols);
        const std::size_t row = within / cols, col = within % cols;
        for (std::size_t r = 0; r < regions.size(); ++r) {
            const RegionBox& b = regions[r].box;
            if (row >= b.row0 && row < b.row1 && col >= b.col0 && col < b.col1) {
                plan.routing.token_group[patch_idx[k]] = static_cast<int>(r);
                break;
            }
        }
    }
    return plan;
}

LatentFrameGrid compose_sample(const FlagDiT& model, const std::vector<RegionPrompt>& regions,
                               const SequenceLayout& layout, const SamplerConfig& config, Rng& rng,
                               const ForwardOptions& base) {
    const CompositionPlan plan = plan_composition(regions, layout);
    ForwardOptions options = base;
    options.routing = &plan.routing;
    return euler_solve(model, layout, plan.prompt, config, rng, options);
}

std::vector<LatentFrameGrid> style_batch_sample(const FlagDiT& model,
                                                const std::vector<std::vector<std::size_t>>& prompts,
                                                const SequenceLayout& layout,
                                                const SamplerConfig& config, Rng& rng,
                                                bool share, const ForwardOptions& base) {
    if (prompts.size() < 2)
        throw ContractError("style batch needs at least 2 prompts, got " +
                            std::to_string(prompts.size()));
    config.validate();
    check_layout(layout);
    NoGradGuard no_grad;
    const TokenSequence skeleton = skeleton_for(model, layout);
    std::vector<Tensor> xs;
    xs.reserve(prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i)
        xs.push_back(gaussian_like(skeleton.payloads.shape(), rng));

    const std::vector<double> grid = make_time_grid(config.steps, config.shift);
    for (std::size_t s = 0; s + 1 < grid.size(); ++s) {
        SharedKV kv_cond, kv_uncond;
        ForwardOptions anchor_cond = base, anchor_uncond = base, other_cond = base,
                       other_uncond = base;
        if (share) {
            anchor_cond.capture_kv = &kv_cond;
            anchor_uncond.capture_kv = &kv_uncond;
            other_cond.shared_kv = &kv_cond;
            other_uncond.shared_kv = &kv_uncond;
        }
        std::vector<Tensor> next(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const bool anchor = i == 0;
            const Tensor v = guided_velocity(model, skeleton, xs[i], grid[s], prompts[i],
                                             config.cfg_scale, anchor ? anchor_cond : other_cond,
                                             anchor ? anchor_uncond : other_uncond);
            next[i] = euler_step(xs[i], v, grid[s], grid[s + 1]);
        }
        xs = std::move(next);
    }

    std::vector<LatentFrameGrid> out;
    out.reserve(xs.size());
    for (const Tensor& x : xs) out.push_back(decode_payloads(skeleton, x));
    return out;
}

LatentFrameGrid channel_normalize(const LatentFrameGrid& grid) {
    constexpr double eps = 1e-6;
    const std::size_t channels = grid.channels();
    const std::size_t count = grid.values.numel() / channels;
    auto src = grid.values.data();
    std::vector<double> mean(channels, 0.0), var(channels, 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) mean[i % channels] += src[i];
    for (auto& m : mean) m /= double(count);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double d = src[i] - mean[i % channels];
        var[i % channels] += d * d;
    }
    LatentFrameGrid out{Tensor(grid.values.shape())};
    auto dst = out.values.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const std::size_t c = i % channels;
        dst[i] = static_cast<real>((src[i] - mean[c]) / (std::sqrt(var[c] / double(count)) + eps));
    }
    return out;
}

LatentFrameGrid edit(const FlagDiT& model, const EditRequest& request, const SamplerConfig& config,
                     Rng& rng, const ForwardOptions& base) {
    const double lambda = request.lambda;
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ContractError("edit: lambda must lie in [0, 1], got " + std::to_string(lambda));
    config.validate();
    const auto& cfg = model.config();
    const LatentFrameGrid& in = request.input;
    if (in.values.rank() != 4 || in.channels() != cfg.channels)
        throw DimensionError("edit: input " + shape_str(in.values.shape()) + " does not carry " +
                             std::to_string(cfg.channels) + " channels");
    const SequenceLayout layout{in.height(), in.width(), in.frames(), cfg.patch};
    check_layout(layout);
    NoGradGuard no_grad;

    const LatentFrameGrid start = request.normalize ? channel_normalize(in) : in;
    const TokenSequence clean = encode_sequence(patchify(start, cfg.patch), cfg.patch);
    const Tensor noise = gaussian_like(clean.payloads.shape(), rng);
    const Tensor x = interpolate(clean.payloads, noise, lambda, Schedule::Linear);

    std::vector<double> grid{lambda};
    for (double g : make_time_grid(config.steps, config.shift))
        if (g > lambda) grid.push_back(g);

    const TokenSequence skeleton = skeleton_for(model, layout);
    const Tensor out = euler_integrate(
        [&](const Tensor& state, double t) {
            return guided_velocity(model, skeleton, state, t, request.prompt, config.cfg_scale,
                                   base, base);
        },
        x, grid);
    return decode_payloads(skeleton, out);
}

} // namespace flagdit
