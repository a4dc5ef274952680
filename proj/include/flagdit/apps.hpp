#pragma once

#include "flagdit/sampler.hpp"

#include <vector>

namespace flagdit {

/// Half-open box [row0, row1) × [col0, col1) on the patch grid, applied to every frame.
struct RegionBox {
    std::size_t row0 = 0, col0 = 0, row1 = 0, col1 = 0;
};

struct RegionPrompt {
    std::vector<std::size_t> prompt;
    RegionBox box;
};

/// Concatenated prompt plus the cross-attention routing that confines each
/// region's patch tokens to its own prompt slice.
struct CompositionPlan {
    std::vector<std::size_t> prompt;
    CrossAttentionRouting routing;
};

CompositionPlan plan_composition(const std::vector<RegionPrompt>& regions,
                                 const SequenceLayout& layout);

/// Regional prompting. Self-attention and the global embedding see the whole
/// concatenated prompt; the unconditional pass is not routed. `base` supplies
/// rotary table, attention scale and probe; its routing is replaced.
LatentFrameGrid compose_sample(const FlagDiT& model, const std::vector<RegionPrompt>& regions,
                               const SequenceLayout& layout, const SamplerConfig& config, Rng& rng,
                               const ForwardOptions& base = {});

/// Jointly samples one grid per prompt. Element 0 is the anchor; when `share`
/// is set every other element also attends to the anchor's pre-RoPE keys and
/// values from the same step and branch.
std::vector<LatentFrameGrid> style_batch_sample(const FlagDiT& model,
                                                const std::vector<std::vector<std::size_t>>& prompts,
                                                const SequenceLayout& layout,
                                                const SamplerConfig& config, Rng& rng,
                                                bool share = true,
                                                const ForwardOptions& base = {});

/// Per-channel (x − mean)/(std + 1e-6), population std over H, W and T.
LatentFrameGrid channel_normalize(const LatentFrameGrid& grid);

struct EditRequest {
    LatentFrameGrid input;
    std::vector<std::size_t> prompt;
    double lambda = 0.2;
    bool normalize = true;
};

/// Solves the flow ODE from x_λ = λ·x′ + (1 − λ)·ε to t = 1.
LatentFrameGrid edit(const FlagDiT& model, const EditRequest& request,
                     const SamplerConfig& config, Rng& rng, const ForwardOptions& base = {});

} // namespace flagdit
