#pragma once

#include "flagdit/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace flagdit {

/// Latent frames of shape [H, W, T, C]. Images have T = 1; videos and
/// multi-view stacks use T > 1. With the identity latent space the grid is
/// the data itself.
struct LatentFrameGrid {
    Tensor values;

    static LatentFrameGrid zeros(std::size_t height, std::size_t width, std::size_t frames,
                                 std::size_t channels);

    std::size_t height() const { return values.dim(0); }
    std::size_t width() const { return values.dim(1); }
    std::size_t frames() const { return values.dim(2); }
    std::size_t channels() const { return values.dim(3); }

    real at(std::size_t y, std::size_t x, std::size_t t, std::size_t c) const;
    real& at(std::size_t y, std::size_t x, std::size_t t, std::size_t c);
};

enum class TokenKind : std::uint8_t { Patch = 0, NextLine = 1, NextFrame = 2, Pad = 3 };

char token_kind_symbol(TokenKind kind);

/// Grid geometry behind a token sequence: pixel extents, frame count, patch size.
struct SequenceLayout {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t frames = 1;
    std::size_t patch = 1;

    std::size_t rows() const { return height / patch; }
    std::size_t cols() const { return width / patch; }
    std::size_t num_patches() const { return frames * rows() * cols(); }
    // T·(h·(w+1)+1)
    std::size_t sequence_length() const { return frames * (rows() * (cols() + 1) + 1); }

    bool operator==(const SequenceLayout&) const = default;
};

/// Unified 1-D token stream. Payload row k belongs to the k-th PATCH token.
struct TokenSequence {
    std::vector<TokenKind> kinds;
    Tensor payloads;                      // [num_patch_tokens, p·p·C]
    std::vector<std::int64_t> positions;  // one per token, specials included
    SequenceLayout layout;

    std::size_t size() const { return kinds.size(); }
    std::size_t num_patches() const;
    // Sequence indices of the PATCH tokens, in payload order.
    std::vector<std::size_t> patch_indices() const;
    // true where a token may be attended to (everything but PAD).
    std::vector<bool> attention_mask() const;
};

struct LayoutInfo {
    std::size_t length = 0;
    std::vector<std::size_t> nextline_indices;
    std::vector<std::size_t> nextframe_indices;
    std::vector<std::size_t> patch_indices;
};

/// Expected token layout for a grid of the given size; the basis for building
/// inference sequences at arbitrary resolution.
LayoutInfo layout_for(std::size_t height, std::size_t width, std::size_t frames, std::size_t patch);
void check_layout(const SequenceLayout& layout);

/// [H,W,T,C] -> [T, H/p, W/p, p·p·C]; within a patch values run (dy, dx, c).
Tensor patchify(const LatentFrameGrid& grid, std::size_t patch);
LatentFrameGrid unpatchify(const Tensor& patches, std::size_t patch);

/// Row-major interleave: NEXTLINE after every patch row, NEXTFRAME after every frame.
TokenSequence encode_sequence(const Tensor& patches, std::size_t patch = 1);
/// Skeleton sequence for a layout with the given payload rows [num_patches, D].
TokenSequence make_sequence(const SequenceLayout& layout, Tensor payloads);
/// Inverse of encode_sequence. Trailing PADs are dropped; any deviation from
/// the layout's kind pattern raises StructureError carrying the token index.
Tensor decode_sequence(const TokenSequence& seq);
void validate_structure(const TokenSequence& seq);

TokenSequence pad_to(const TokenSequence& seq, std::size_t length);

struct PaddedBatch {
    std::size_t width = 0;
    std::vector<TokenSequence> sequences;  // all of length `width`
    std::vector<std::vector<bool>> masks;  // false on PAD
};

PaddedBatch pad_batch(const std::vector<TokenSequence>& seqs);

// --- file I/O ---------------------------------------------------------------

/// LFG1: "LFG1", u32 H, W, T, C (little-endian), then H·W·T·C float32 values.
void write_grid(const std::string& path, const LatentFrameGrid& grid);
LatentFrameGrid read_grid(const std::string& path);
std::vector<std::uint8_t> encode_grid(const LatentFrameGrid& grid);
LatentFrameGrid decode_grid(const std::vector<std::uint8_t>& bytes);

/// Binary PGM (C = 1) or PPM (C = 3) of one frame; values in [-1, 1] map to [0, 255].
void write_preview(const std::string& path, const LatentFrameGrid& grid, std::size_t frame = 0);

} // namespace flagdit
