#pragma once

#include "flagdit/codec.hpp"
#include "flagdit/rope.hpp"
#include "flagdit/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace flagdit {

struct FlagDiTConfig {
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t hidden = 32;
    std::size_t patch = 2;
    double rope_base = 10000.0;
    std::size_t mlp_ratio = 4;
    std::size_t vocab = 16;  // id 0 is the unconditional prompt
    std::size_t channels = 1;
    std::size_t time_freq_dim = 64;
    // Training resolution; fixes L_train for extrapolation.
    std::size_t train_height = 16;
    std::size_t train_width = 16;
    std::size_t train_frames = 1;
    std::uint64_t seed = 0;

    std::size_t head_dim() const { return heads ? hidden / heads : 0; }
    std::size_t patch_dim() const { return patch * patch * channels; }
    std::size_t train_sequence_length() const;

    void validate() const;

    /// Layer/head/width presets: tiny, S, B, L, XL, 5B, 7B.
    static FlagDiTConfig preset(std::string_view name);

    bool operator==(const FlagDiTConfig&) const = default;
};

std::vector<std::string> preset_names();

/// Toy conditioner output: per-token embeddings (source of text keys/values)
/// and their mean, the global embedding added to the timestep embedding.
struct TextEmbedding {
    Tensor tokens;  // [n, hidden]
    Tensor global;  // [1, hidden]
};

/// Per-layer, per-head keys (RMS-normalised, before RoPE) and values.
struct LayerKV {
    std::vector<Tensor> keys;
    std::vector<Tensor> values;
};
using SharedKV = std::vector<LayerKV>;

/// Restricts which text tokens each sequence position may cross-attend to.
struct CrossAttentionRouting {
    std::vector<std::pair<std::size_t, std::size_t>> groups;  // [begin, end) over text tokens
    std::vector<int> token_group;  // per sequence position; -1 = every text token
};

struct AttentionEvent {
    std::size_t layer = 0;
    std::size_t head = 0;
    bool routed = false;
    const Tensor* logits = nullptr;  // scaled, before masking
    const Tensor* probs = nullptr;
};

struct AttentionProbe {
    std::function<void(const AttentionEvent&)> on_self;
    std::function<void(const AttentionEvent&)> on_cross;
};

struct ForwardOptions {
    const RopeFrequencies* freqs = nullptr;  // default: the model's own table
    double prop_scale = 1.0;
    const CrossAttentionRouting* routing = nullptr;
    // Appended after the sequence's own keys/values in self-attention.
    const SharedKV* shared_kv = nullptr;
    SharedKV* capture_kv = nullptr;
    const AttentionProbe* probe = nullptr;
};

/// Sinusoidal features of t (scaled by 1000): [cos(...), sin(...)].
Tensor timestep_features(double t, std::size_t dim);

/// Key positions when `anchor_len` shared tokens are appended to a target.
std::vector<std::int64_t> shared_key_positions(std::span<const std::int64_t> target_positions,
                                               std::size_t anchor_len);

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Flow-based diffusion transformer: pre-RMSNorm blocks with RoPE self-attention,
/// KQ-Norm, tanh-gated cross-attention to toy text tokens, and adaptive
/// scale/shift/gate modulation from timestep + global text embedding.
class FlagDiT {
public:
    explicit FlagDiT(FlagDiTConfig config);

    const FlagDiTConfig& config() const { return config_; }
    const RopeFrequencies& freqs() const { return freqs_; }

    /// Velocity prediction for every PATCH token: [num_patches, p·p·C].
    Tensor forward(const TokenSequence& seq, double t, std::span<const std::size_t> prompt,
                   const ForwardOptions& options = {}) const;
    std::vector<Tensor> forward_batch(const PaddedBatch& batch, std::span<const double> ts,
                                      const std::vector<std::vector<std::size_t>>& prompts,
                                      const ForwardOptions& options = {}) const;

    TextEmbedding encode_text(std::span<const std::size_t> prompt) const;
    /// Timestep MLP output, [1, hidden].
    Tensor timestep_embedding(double t) const;
    /// One transformer block applied to x[L, hidden] under conditioning vector
    /// cond[1, hidden], cross-attending to `prompt`. No masking.
    Tensor run_block(std::size_t layer, const Tensor& x, const Tensor& cond,
                     std::span<const std::int64_t> positions,
                     std::span<const std::size_t> prompt) const;

    /// tanh(α) for every [layer][head].
    std::vector<std::vector<double>> gate_values() const;

    std::vector<NamedTensor> parameters() const;
    std::size_t parameter_count() const;
    void zero_grad();

private:
    struct Block {
        Tensor attn_norm;
        Tensor wq, wk, wv, wo;
        Tensor q_norm, k_norm;
        Tensor text_wk, text_wv;
        Tensor gate;  // [heads, 1]
        Tensor mlp_norm;
        Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
        Tensor mod_w, mod_b;  // -> 6·hidden
    };

    Tensor embed_sequence(const TokenSequence& seq) const;
    Tensor condition(double t, const TextEmbedding& text) const;
    Tensor block_forward(std::size_t layer, const Tensor& x, const Tensor& cond,
                         std::span<const std::int64_t> positions, const std::vector<bool>& key_mask,
                         const Tensor& text_normed, const ForwardOptions& options) const;
    Tensor attention(std::size_t layer, const Tensor& h, std::span<const std::int64_t> positions,
                     const std::vector<bool>& key_mask, const Tensor& text_normed,
                     const ForwardOptions& options) const;

    FlagDiTConfig config_;
    RopeFrequencies freqs_;

    Tensor patch_w_, patch_b_;
    Tensor specials_;  // rows: NEXTLINE, NEXTFRAME, PAD
    Tensor time_w1_, time_b1_, time_w2_, time_b2_;
    Tensor text_table_;
    Tensor text_norm_;
    std::vector<Block> blocks_;
    Tensor final_norm_;
    Tensor final_mod_w_, final_mod_b_;  // -> 2·hidden
    Tensor head_w_, head_b_;
};

} // namespace flagdit
