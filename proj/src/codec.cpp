#include "flagdit/codec.hpp"

#include "flagdit/binary_io.hpp"
#include "flagdit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace flagdit {

LatentFrameGrid LatentFrameGrid::zeros(std::size_t height, std::size_t width, std::size_t frames,
                                       std::size_t channels) {
    return LatentFrameGrid{Tensor({height, width, frames, channels})};
}

real LatentFrameGrid::at(std::size_t y, std::size_t x, std::size_t t, std::size_t c) const {
    return values.data()[((y * width() + x) * frames() + t) * channels() + c];
}

real& LatentFrameGrid::at(std::size_t y, std::size_t x, std::size_t t, std::size_t c) {
    return values.mutable_data()[((y * width() + x) * frames() + t) * channels() + c];
}

char token_kind_symbol(TokenKind kind) {
    switch (kind) {
    case TokenKind::Patch: return 'P';
    case TokenKind::NextLine: return 'L';
    case TokenKind::NextFrame: return 'F';
    case TokenKind::Pad: return '_';
    }
    return '?';
}

std::size_t TokenSequence::num_patches() const {
    return static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), TokenKind::Patch));
}

std::vector<std::size_t> TokenSequence::patch_indices() const {
    std::vector<std::size_t> out;
    out.reserve(kinds.size());
    for (std::size_t i = 0; i < kinds.size(); ++i)
        if (kinds[i] == TokenKind::Patch) out.push_back(i);
    return out;
}

std::vector<bool> TokenSequence::attention_mask() const {
    std::vector<bool> mask(kinds.size());
    for (std::size_t i = 0; i < kinds.size(); ++i) mask[i] = kinds[i] != TokenKind::Pad;
    return mask;
}

void check_layout(const SequenceLayout& layout) {
    if (layout.patch == 0 || layout.height == 0 || layout.width == 0 || layout.frames == 0)
        throw LayoutError("layout extents must be positive");
    if (layout.height % layout.patch != 0 || layout.width % layout.patch != 0)
        throw LayoutError("grid " + std::to_string(layout.height) + "x" +
                          std::to_string(layout.width) + " is not divisible by patch size " +
                          std::to_string(layout.patch));
}

LayoutInfo layout_for(std::size_t height, std::size_t width, std::size_t frames, std::size_t patch) {
    const SequenceLayout layout{height, width, frames, patch};
    check_layout(layout);
    LayoutInfo info;
    info.length = layout.sequence_length();
    std::size_t index = 0;
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t i = 0; i < layout.rows(); ++i) {
            for (std::size_t j = 0; j < layout.cols(); ++j) info.patch_indices.push_back(index++);
            info.nextline_indices.push_back(index++);
        }
        info.nextframe_indices.push_back(index++);
    }
    return info;
}

Tensor patchify(const LatentFrameGrid& grid, std::size_t patch) {
    const std::size_t H = grid.height(), W = grid.width(), T = grid.frames(), C = grid.channels();
    if (patch == 0 || H % patch != 0 || W % patch != 0)
        throw LayoutError("cannot patchify H=" + std::to_string(H) + ", W=" + std::to_string(W) +
                          " with p=" + std::to_string(patch));
    const std::size_t h = H / patch, w = W / patch, D = patch * patch * C;
    Tensor out({T, h, w, D});
    auto dst = out.mutable_data();
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                real* cell = dst.data() + ((t * h + i) * w + j) * D;
                for (std::size_t dy = 0; dy < patch; ++dy)
                    for (std::size_t dx = 0; dx < patch; ++dx)
                        for (std::size_t c = 0; c < C; ++c)
                            cell[(dy * patch + dx) * C + c] =
                                grid.at(i * patch + dy, j * patch + dx, t, c);
            }
    return out;
}

LatentFrameGrid unpatchify(const Tensor& patches, std::size_t patch) {
    if (patches.rank() != 4) throw DimensionError("unpatchify expects [T,h,w,D], got " +
                                                  shape_str(patches.shape()));
    const std::size_t T = patches.dim(0), h = patches.dim(1), w = patches.dim(2),
                      D = patches.dim(3);
    if (patch == 0 || D % (patch * patch) != 0)
        throw LayoutError("patch width " + std::to_string(D) + " is not a multiple of p^2 for p=" +
                          std::to_string(patch));
    const std::size_t C = D / (patch * patch);
    auto grid = LatentFrameGrid::zeros(h * patch, w * patch, T, C);
    auto src = patches.data();
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const real* cell = src.data() + ((t * h + i) * w + j) * D;
                for (std::size_t dy = 0; dy < patch; ++dy)
                    for (std::size_t dx = 0; dx < patch; ++dx)
                        for (std::size_t c = 0; c < C; ++c)
                            grid.at(i * patch + dy, j * patch + dx, t, c) =
                                cell[(dy * patch + dx) * C + c];
            }
    return grid;
}

TokenSequence make_sequence(const SequenceLayout& layout, Tensor payloads) {
    check_layout(layout);
    if (payloads.rank() != 2 || payloads.dim(0) != layout.num_patches())
        throw DimensionError("payloads " + shape_str(payloads.shape()) + " do not match " +
                             std::to_string(layout.num_patches()) + " patch tokens");
    TokenSequence seq;
    seq.layout = layout;
    seq.payloads = std::move(payloads);
    seq.kinds.reserve(layout.sequence_length());
    for (std::size_t t = 0; t < layout.frames; ++t) {
        for (std::size_t i = 0; i < layout.rows(); ++i) {
            seq.kinds.insert(seq.kinds.end(), layout.cols(), TokenKind::Patch);
            seq.kinds.push_back(TokenKind::NextLine);
        }
        seq.kinds.push_back(TokenKind::NextFrame);
    }
    seq.positions.resize(seq.kinds.size());
    for (std::size_t i = 0; i < seq.positions.size(); ++i)
        seq.positions[i] = static_cast<std::int64_t>(i);
    return seq;
}

TokenSequence encode_sequence(const Tensor& patches, std::size_t patch) {
    if (patches.rank() != 4)
        throw DimensionError("encode_sequence expects [T,h,w,D], got " + shape_str(patches.shape()));
    const std::size_t T = patches.dim(0), h = patches.dim(1), w = patches.dim(2),
                      D = patches.dim(3);
    const SequenceLayout layout{h * patch, w * patch, T, patch};
    return make_sequence(layout, Tensor({T * h * w, D}, {patches.data().begin(), patches.data().end()}));
}

void validate_structure(const TokenSequence& seq) {
    const SequenceLayout& layout = seq.layout;
    check_layout(layout);
    const std::size_t expected = layout.sequence_length();
    const std::size_t n = seq.kinds.size();
    if (seq.positions.size() != n)
        throw StructureError("positions (" + std::to_string(seq.positions.size()) +
                             ") and kinds (" + std::to_string(n) + ") differ in length");
    std::size_t index = 0;
    auto expect = [&](TokenKind want) {
        if (index >= n)
            throw StructureError("sequence ends at " + std::to_string(n) + " but expected '" +
                                     token_kind_symbol(want) + "'",
                                 static_cast<long>(index));
        if (seq.kinds[index] != want)
            throw StructureError("token " + std::to_string(index) + " is '" +
                                     token_kind_symbol(seq.kinds[index]) + "', expected '" +
                                     token_kind_symbol(want) + "'",
                                 static_cast<long>(index));
        ++index;
    };
    for (std::size_t t = 0; t < layout.frames; ++t) {
        for (std::size_t i = 0; i < layout.rows(); ++i) {
            for (std::size_t j = 0; j < layout.cols(); ++j) expect(TokenKind::Patch);
            expect(TokenKind::NextLine);
        }
        expect(TokenKind::NextFrame);
    }
    for (; index < n; ++index)
        if (seq.kinds[index] != TokenKind::Pad)
            throw StructureError("non-PAD token '" + std::string(1, token_kind_symbol(seq.kinds[index])) +
                                     "' after the last frame at " + std::to_string(index),
                                 static_cast<long>(index));
    if (index != n || expected > n) throw StructureError("sequence shorter than its layout");
    if (!seq.payloads.defined() || seq.payloads.rank() != 2 ||
        seq.payloads.dim(0) != layout.num_patches())
        throw StructureError("payload rows do not match the number of PATCH tokens");
}

Tensor decode_sequence(const TokenSequence& seq) {
    validate_structure(seq);
    const auto& l = seq.layout;
    const std::size_t D = seq.payloads.dim(1);
    return Tensor({l.frames, l.rows(), l.cols(), D},
                  {seq.payloads.data().begin(), seq.payloads.data().end()});
}

TokenSequence pad_to(const TokenSequence& seq, std::size_t length) {
    if (length < seq.size())
        throw ContractError("cannot pad a sequence of length " + std::to_string(seq.size()) +
                            " down to " + std::to_string(length));
    TokenSequence out = seq;
    std::int64_t next = seq.positions.empty() ? 0 : seq.positions.back() + 1;
    while (out.kinds.size() < length) {
        out.kinds.push_back(TokenKind::Pad);
        out.positions.push_back(next++);
    }
    return out;
}

PaddedBatch pad_batch(const std::vector<TokenSequence>& seqs) {
    if (seqs.empty()) throw ContractError("pad_batch: empty batch");
    PaddedBatch batch;
    for (const auto& s : seqs) batch.width = std::max(batch.width, s.size());
    for (const auto& s : seqs) {
        batch.sequences.push_back(pad_to(s, batch.width));
        batch.masks.push_back(batch.sequences.back().attention_mask());
    }
    return batch;
}

// --- file I/O ------------------------------------------------------------------

namespace {

constexpr char kGridMagic[4] = {'L', 'F', 'G', '1'};

} // namespace

std::vector<std::uint8_t> encode_grid(const LatentFrameGrid& grid) {
    std::vector<std::uint8_t> out;
    out.reserve(20 + grid.values.numel() * 4);
    out.insert(out.end(), kGridMagic, kGridMagic + 4);
    binary::put_u32(out, static_cast<std::uint32_t>(grid.height()));
    binary::put_u32(out, static_cast<std::uint32_t>(grid.width()));
    binary::put_u32(out, static_cast<std::uint32_t>(grid.frames()));
    binary::put_u32(out, static_cast<std::uint32_t>(grid.channels()));
    for (real v : grid.values.data()) binary::put_f32(out, static_cast<float>(v));
    return out;
}

LatentFrameGrid decode_grid(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 20 || !std::equal(kGridMagic, kGridMagic + 4, bytes.begin()))
        throw FormatError("not an LFG1 grid (bad magic or short header)");
    binary::Reader reader(bytes, 4);
    const std::size_t H = reader.u32(), W = reader.u32(), T = reader.u32(), C = reader.u32();
    if (H == 0 || W == 0 || T == 0 || C == 0) throw FormatError("LFG1 grid has a zero extent");
    const std::size_t count = H * W * T * C;
    if (bytes.size() != 20 + count * 4)
        throw FormatError("LFG1 payload holds " + std::to_string((bytes.size() - 20) / 4) +
                          " values, header declares " + std::to_string(count));
    auto grid = LatentFrameGrid::zeros(H, W, T, C);
    auto dst = grid.values.mutable_data();
    for (std::size_t i = 0; i < count; ++i) dst[i] = static_cast<real>(reader.f32());
    return grid;
}

void write_grid(const std::string& path, const LatentFrameGrid& grid) {
    binary::write_file(path, encode_grid(grid));
}

LatentFrameGrid read_grid(const std::string& path) { return decode_grid(binary::read_file(path)); }

void write_preview(const std::string& path, const LatentFrameGrid& grid, std::size_t frame) {
    const std::size_t C = grid.channels();
    if (C != 1 && C != 3)
        throw FormatError("preview needs 1 or 3 channels, grid has " + std::to_string(C));
    if (frame >= grid.frames()) throw ContractError("preview frame out of range");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    os << (C == 1 ? "P5" : "P6") << '\n' << grid.width() << ' ' << grid.height() << "\n255\n";
    for (std::size_t y = 0; y < grid.height(); ++y)
        for (std::size_t x = 0; x < grid.width(); ++x)
            for (std::size_t c = 0; c < C; ++c) {
                const double v = std::clamp<double>(grid.at(y, x, frame, c), -1.0, 1.0);
                os.put(static_cast<char>(static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5))));
            }
}

} // namespace flagdit
