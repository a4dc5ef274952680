#include "flagdit/model.hpp"

#include "flagdit/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>

namespace flagdit {

// --- configuration -----------------------------------------------------------

std::size_t FlagDiTConfig::train_sequence_length() const {
    return SequenceLayout{train_height, train_width, train_frames, patch}.sequence_length();
}

void FlagDiTConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
    if (layers == 0) fail("layers must be positive");
    if (heads == 0 || hidden == 0) fail("heads and hidden must be positive");
    if (hidden % heads != 0)
        fail("heads (" + std::to_string(heads) + ") must divide hidden (" +
             std::to_string(hidden) + ")");
    if (head_dim() % 2 != 0) fail("head_dim " + std::to_string(head_dim()) + " must be even");
    if (patch == 0 || channels == 0) fail("patch and channels must be positive");
    if (mlp_ratio == 0) fail("mlp_ratio must be positive");
    if (vocab < 1) fail("vocab must include the unconditional id 0");
    if (time_freq_dim == 0 || time_freq_dim % 2 != 0) fail("time_freq_dim must be even");
    if (!(rope_base > 0)) fail("rope_base must be positive");
    if (train_height % patch != 0 || train_width % patch != 0 || train_frames == 0 ||
        train_height == 0 || train_width == 0)
        fail("training resolution must be positive and divisible by the patch size");
}

std::vector<std::string> preset_names() { return {"tiny", "S", "B", "L", "XL", "5B", "7B"}; }

FlagDiTConfig FlagDiTConfig::preset(std::string_view name) {
    struct Row {
        std::string_view name;
        std::size_t layers, heads, hidden;
    };
    static constexpr Row rows[] = {
        {"tiny", 2, 2, 32},      {"S", 4, 8, 768},        {"B", 8, 12, 768},
        {"L", 12, 24, 1024},     {"XL", 20, 28, 1152},    {"5B", 32, 32, 3072},
        {"7B", 32, 32, 4096},
    };
    auto lower = [](std::string_view s) {
        std::string out(s);
        for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return out;
    };
    for (const auto& r : rows) {
        if (lower(r.name) == lower(name)) {
            FlagDiTConfig cfg;
            cfg.layers = r.layers;
            cfg.heads = r.heads;
            cfg.hidden = r.hidden;
            return cfg;
        }
    }
    throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

// --- free helpers --------------------------------------------------------------

Tensor timestep_features(double t, std::size_t dim) {
    if (!std::isfinite(t)) throw ContractError("timestep must be finite");
    const std::size_t half = dim / 2;
    Tensor out({1, dim});
    auto v = out.mutable_data();
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
        const double arg = 1000.0 * t * freq;
        v[i] = static_cast<real>(std::cos(arg));
        v[half + i] = static_cast<real>(std::sin(arg));
    }
    return out;
}

std::vector<std::int64_t> shared_key_positions(std::span<const std::int64_t> target_positions,
                                               std::size_t anchor_len) {
    std::vector<std::int64_t> out(target_positions.begin(), target_positions.end());
    std::int64_t next = target_positions.empty() ? 0 : target_positions.back() + 1;
    for (std::size_t i = 0; i < anchor_len; ++i) out.push_back(next++);
    return out;
}

namespace {

Tensor modulate(const Tensor& h, const Tensor& shift, const Tensor& scale_delta) {
    // h·(1 + δ) + shift
    return add_row(add(h, mul_row(h, scale_delta)), shift);
}

class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Tensor xavier(std::size_t fan_in, std::size_t fan_out) {
        const double a = std::sqrt(6.0 / double(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-a, a);
        Tensor t({fan_in, fan_out}, true);
        for (auto& v : t.mutable_data()) v = static_cast<real>(dist(rng_));
        return t;
    }

    Tensor normal(Shape shape, double std) {
        std::normal_distribution<double> dist(0.0, std);
        Tensor t(std::move(shape), true);
        for (auto& v : t.mutable_data()) v = static_cast<real>(dist(rng_));
        return t;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), true); }
    static Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1).set_requires_grad(true); }

private:
    std::mt19937_64 rng_;
};

constexpr real kNegInf = -std::numeric_limits<real>::infinity();

} // namespace

// --- construction -----------------------------------------------------------------

FlagDiT::FlagDiT(FlagDiTConfig config) : config_(std::move(config)) {
    config_.validate();
    freqs_ = build_freqs(config_.head_dim(), config_.rope_base);
    const std::size_t D = config_.hidden, pd = config_.patch_dim(), H = config_.heads;
    const std::size_t F = D * config_.mlp_ratio;
    Initializer init(config_.seed);

    patch_w_ = init.xavier(pd, D);
    patch_b_ = Initializer::zeros({D});
    specials_ = init.normal({3, D}, 0.02);
    time_w1_ = init.xavier(config_.time_freq_dim, D);
    time_b1_ = Initializer::zeros({D});
    time_w2_ = init.xavier(D, D);
    time_b2_ = Initializer::zeros({D});
    text_table_ = init.normal({config_.vocab, D}, 0.02);
    text_norm_ = Initializer::ones({D});

    blocks_.resize(config_.layers);
    for (auto& b : blocks_) {
        b.attn_norm = Initializer::ones({D});
        b.wq = init.xavier(D, D);
        b.wk = init.xavier(D, D);
        b.wv = init.xavier(D, D);
        b.wo = init.xavier(D, D);
        b.q_norm = Initializer::ones({config_.head_dim()});
        b.k_norm = Initializer::ones({config_.head_dim()});
        b.text_wk = init.xavier(D, D);
        b.text_wv = init.xavier(D, D);
        b.gate = Initializer::zeros({H, 1});
        b.mlp_norm = Initializer::ones({D});
        b.mlp_w1 = init.xavier(D, F);
        b.mlp_b1 = Initializer::zeros({F});
        b.mlp_w2 = init.xavier(F, D);
        b.mlp_b2 = Initializer::zeros({D});
        b.mod_w = Initializer::zeros({D, 6 * D});
        b.mod_b = Initializer::zeros({6 * D});
    }
    final_norm_ = Initializer::ones({D});
    final_mod_w_ = Initializer::zeros({D, 2 * D});
    final_mod_b_ = Initializer::zeros({2 * D});
    head_w_ = Initializer::zeros({D, pd});
    head_b_ = Initializer::zeros({pd});
}

std::vector<NamedTensor> FlagDiT::parameters() const {
    std::vector<NamedTensor> out = {
        {"patch.w", patch_w_},       {"patch.b", patch_b_},     {"specials", specials_},
        {"time.w1", time_w1_},       {"time.b1", time_b1_},     {"time.w2", time_w2_},
        {"time.b2", time_b2_},       {"text.table", text_table_}, {"text.norm", text_norm_},
    };
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        const std::string p = "blocks." + std::to_string(i) + ".";
        for (auto& [name, t] : std::vector<std::pair<const char*, Tensor>>{
                 {"attn_norm", b.attn_norm}, {"wq", b.wq},           {"wk", b.wk},
                 {"wv", b.wv},               {"wo", b.wo},           {"q_norm", b.q_norm},
                 {"k_norm", b.k_norm},       {"text_wk", b.text_wk}, {"text_wv", b.text_wv},
                 {"gate", b.gate},           {"mlp_norm", b.mlp_norm}, {"mlp_w1", b.mlp_w1},
                 {"mlp_b1", b.mlp_b1},       {"mlp_w2", b.mlp_w2},   {"mlp_b2", b.mlp_b2},
                 {"mod_w", b.mod_w},         {"mod_b", b.mod_b}})
            out.push_back({p + name, t});
    }
    out.push_back({"final.norm", final_norm_});
    out.push_back({"final.mod_w", final_mod_w_});
    out.push_back({"final.mod_b", final_mod_b_});
    out.push_back({"head.w", head_w_});
    out.push_back({"head.b", head_b_});
    return out;
}

std::size_t FlagDiT::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
}

void FlagDiT::zero_grad() {
    for (auto& p : parameters()) p.tensor.zero_grad();
}

std::vector<std::vector<double>> FlagDiT::gate_values() const {
    std::vector<std::vector<double>> out;
    for (const auto& b : blocks_) {
        std::vector<double> row;
        for (real a : b.gate.data()) row.push_back(std::tanh(double(a)));
        out.push_back(std::move(row));
    }
    return out;
}

// --- conditioning ----------------------------------------------------------------------

TextEmbedding FlagDiT::encode_text(std::span<const std::size_t> prompt) const {
    if (prompt.empty()) throw ContractError("empty prompt; use the unconditional id 0");
    for (auto id : prompt)
        if (id >= config_.vocab)
            throw ContractError("prompt id " + std::to_string(id) + " out of range for vocab " +
                                std::to_string(config_.vocab));
    Tensor tokens = gather_rows(text_table_, prompt);
    return {tokens, mean_rows(tokens)};
}

Tensor FlagDiT::timestep_embedding(double t) const {
    Tensor f = timestep_features(t, config_.time_freq_dim);
    return linear(silu(linear(f, time_w1_, time_b1_)), time_w2_, time_b2_);
}

Tensor FlagDiT::condition(double t, const TextEmbedding& text) const {
    return add(timestep_embedding(t), text.global);
}

// --- forward -------------------------------------------------------------------------------

Tensor FlagDiT::embed_sequence(const TokenSequence& seq) const {
    const std::size_t np = seq.payloads.dim(0);
    Tensor table = concat_rows({linear(seq.payloads, patch_w_, patch_b_), specials_});
    std::vector<std::size_t> ids(seq.size());
    std::size_t next_patch = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        switch (seq.kinds[i]) {
        case TokenKind::Patch: ids[i] = next_patch++; break;
        case TokenKind::NextLine: ids[i] = np; break;
        case TokenKind::NextFrame: ids[i] = np + 1; break;
        case TokenKind::Pad: ids[i] = np + 2; break;
        }
    }
    return gather_rows(table, ids);
}

Tensor FlagDiT::attention(std::size_t layer, const Tensor& h, std::span<const std::int64_t> positions,
                          const std::vector<bool>& key_mask, const Tensor& text_normed,
                          const ForwardOptions& options) const {
    const Block& b = blocks_[layer];
    const std::size_t L = h.dim(0), d = config_.head_dim();
    const RopeFrequencies& freqs = options.freqs ? *options.freqs : freqs_;
    const double inv_sqrt_d = 1.0 / std::sqrt(double(d));

    const LayerKV* shared = nullptr;
    if (options.shared_kv) {
        if (options.shared_kv->size() != blocks_.size())
            throw ContractError("shared K/V must cover every layer");
        shared = &(*options.shared_kv)[layer];
    }
    if (options.capture_kv) {
        options.capture_kv->resize(blocks_.size());
        (*options.capture_kv)[layer] = LayerKV{};
    }

    const std::size_t anchor_len = shared ? shared->keys.front().dim(0) : 0;
    const std::vector<std::int64_t> key_positions = shared_key_positions(positions, anchor_len);
    const bool need_mask =
        std::find(key_mask.begin(), key_mask.end(), false) != key_mask.end();
    Tensor self_bias;
    if (need_mask) {
        self_bias = Tensor({L, L + anchor_len});
        auto bias = self_bias.mutable_data();
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < L; ++j)
                if (!key_mask[j]) bias[i * (L + anchor_len) + j] = kNegInf;
    }

    const std::size_t n_text = text_normed.dim(0);
    Tensor cross_bias;
    if (options.routing) {
        const auto& routing = *options.routing;
        if (routing.token_group.size() != L)
            throw ContractError("cross-attention routing covers " +
                                std::to_string(routing.token_group.size()) + " tokens, sequence has " +
                                std::to_string(L));
        cross_bias = Tensor({L, n_text});
        auto bias = cross_bias.mutable_data();
        for (std::size_t i = 0; i < L; ++i) {
            const int g = routing.token_group[i];
            if (g < 0) continue;
            const auto [lo, hi] = routing.groups.at(static_cast<std::size_t>(g));
            for (std::size_t j = 0; j < n_text; ++j)
                if (j < lo || j >= hi) bias[i * n_text + j] = kNegInf;
        }
    }

    Tensor q = matmul(h, b.wq), k = matmul(h, b.wk), v = matmul(h, b.wv);
    Tensor text_k = matmul(text_normed, b.text_wk), text_v = matmul(text_normed, b.text_wv);
    Tensor gates = tanh(b.gate);

    std::vector<Tensor> heads;
    heads.reserve(config_.heads);
    for (std::size_t hd = 0; hd < config_.heads; ++hd) {
        const std::size_t c0 = hd * d, c1 = c0 + d;
        Tensor qh = rms_norm(slice_cols(q, c0, c1), b.q_norm);
        Tensor kh = rms_norm(slice_cols(k, c0, c1), b.k_norm);
        Tensor vh = slice_cols(v, c0, c1);
        if (options.capture_kv) {
            (*options.capture_kv)[layer].keys.push_back(kh);
            (*options.capture_kv)[layer].values.push_back(vh);
        }
        if (shared) {
            kh = concat_rows({kh, shared->keys.at(hd)});
            vh = concat_rows({vh, shared->values.at(hd)});
        }
        Tensor q_rot = rope_rows(qh, positions, freqs);
        Tensor k_rot = rope_rows(kh, key_positions, freqs);

        Tensor logits = scale(matmul_nt(q_rot, k_rot), options.prop_scale * inv_sqrt_d);
        Tensor probs = softmax_lastdim(need_mask ? add(logits, self_bias) : logits);
        if (options.probe && options.probe->on_self)
            options.probe->on_self({layer, hd, false, &logits, &probs});
        Tensor out = matmul(probs, vh);

        // Text keys carry no rotary phase, so the queries here stay unrotated too;
        // otherwise the absolute position would leak into the output.
        Tensor cross_logits = scale(matmul_nt(qh, slice_cols(text_k, c0, c1)), inv_sqrt_d);
        Tensor cross_probs =
            softmax_lastdim(options.routing ? add(cross_logits, cross_bias) : cross_logits);
        if (options.probe && options.probe->on_cross)
            options.probe->on_cross({layer, hd, options.routing != nullptr, &cross_logits, &cross_probs});
        Tensor cross = matmul(cross_probs, slice_cols(text_v, c0, c1));
        heads.push_back(add(out, scale_by(cross, slice_rows(gates, hd, hd + 1))));
    }
    return matmul(concat_cols(heads), b.wo);
}

Tensor FlagDiT::block_forward(std::size_t layer, const Tensor& x, const Tensor& cond,
                              std::span<const std::int64_t> positions,
                              const std::vector<bool>& key_mask, const Tensor& text_normed,
                              const ForwardOptions& options) const {
    const Block& b = blocks_[layer];
    const std::size_t D = config_.hidden;
    Tensor mod = linear(silu(cond), b.mod_w, b.mod_b);
    auto chunk = [&](std::size_t i) { return slice_cols(mod, i * D, (i + 1) * D); };
    Tensor shift_msa = chunk(0), scale_msa = chunk(1), gate_msa = chunk(2);
    Tensor shift_mlp = chunk(3), scale_mlp = chunk(4), gate_mlp = chunk(5);

    Tensor h = modulate(rms_norm(x, b.attn_norm), shift_msa, scale_msa);
    Tensor attn = attention(layer, h, positions, key_mask, text_normed, options);
    Tensor y = add(x, mul_row(attn, gate_msa));

    Tensor h2 = modulate(rms_norm(y, b.mlp_norm), shift_mlp, scale_mlp);
    Tensor ff = linear(silu(linear(h2, b.mlp_w1, b.mlp_b1)), b.mlp_w2, b.mlp_b2);
    return add(y, mul_row(ff, gate_mlp));
}

Tensor FlagDiT::run_block(std::size_t layer, const Tensor& x, const Tensor& cond,
                          std::span<const std::int64_t> positions,
                          std::span<const std::size_t> prompt) const {
    if (layer >= blocks_.size()) throw ContractError("layer index out of range");
    const TextEmbedding text = encode_text(prompt);
    const std::vector<bool> mask(x.dim(0), true);
    return block_forward(layer, x, cond, positions, mask, rms_norm(text.tokens, text_norm_), {});
}

Tensor FlagDiT::forward(const TokenSequence& seq, double t, std::span<const std::size_t> prompt,
                        const ForwardOptions& options) const {
    validate_structure(seq);
    if (seq.payloads.dim(1) != config_.patch_dim())
        throw DimensionError("payload width " + std::to_string(seq.payloads.dim(1)) +
                             " does not match model patch_dim " +
                             std::to_string(config_.patch_dim()));
    if (seq.layout.patch != config_.patch)
        throw LayoutError("sequence patch size " + std::to_string(seq.layout.patch) +
                          " differs from the model's " + std::to_string(config_.patch));
    if (!std::isfinite(t)) throw ContractError("timestep must be finite");

    const TextEmbedding text = encode_text(prompt);
    const Tensor text_normed = rms_norm(text.tokens, text_norm_);
    const Tensor cond = condition(t, text);
    const std::vector<bool> mask = seq.attention_mask();

    Tensor x = embed_sequence(seq);
    for (std::size_t layer = 0; layer < blocks_.size(); ++layer)
        x = block_forward(layer, x, cond, seq.positions, mask, text_normed, options);

    const std::size_t D = config_.hidden;
    Tensor mod = linear(silu(cond), final_mod_w_, final_mod_b_);
    const std::vector<std::size_t> patch_rows = seq.patch_indices();
    Tensor h = modulate(rms_norm(gather_rows(x, patch_rows), final_norm_), slice_cols(mod, 0, D),
                        slice_cols(mod, D, 2 * D));
    return linear(h, head_w_, head_b_);
}

std::vector<Tensor> FlagDiT::forward_batch(const PaddedBatch& batch, std::span<const double> ts,
                                           const std::vector<std::vector<std::size_t>>& prompts,
                                           const ForwardOptions& options) const {
    if (ts.size() != batch.sequences.size() || prompts.size() != batch.sequences.size())
        throw ContractError("forward_batch: times/prompts do not match the batch size");
    std::vector<Tensor> out;
    out.reserve(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i)
        out.push_back(forward(batch.sequences[i], ts[i], prompts[i], options));
    return out;
}

} // namespace flagdit
