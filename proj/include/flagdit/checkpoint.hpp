#pragma once

#include "flagdit/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace flagdit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// FDT1 layout: magic "FDT1", u32 version, u64 header length, header text,
/// then every tensor as little-endian float32 in directory order.
///
/// Header lines are `config.<field> = <value>` followed by
/// `tensor <name> <d0>x<d1>... <byte offset>`; offsets are relative to the
/// start of the payload.
std::vector<std::uint8_t> encode_checkpoint(const FlagDiT& model);
FlagDiT decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const FlagDiT& model);
FlagDiT load_checkpoint(const std::string& path);

struct TensorEntry {
    std::string name;
    Shape shape;
    std::uint64_t offset = 0;
};

struct CheckpointHeader {
    std::uint32_t version = 0;
    FlagDiTConfig config;
    std::vector<TensorEntry> tensors;
    std::uint64_t payload_offset = 0;  // absolute file offset of the payload
};

CheckpointHeader read_checkpoint_header(const std::vector<std::uint8_t>& bytes);

} // namespace flagdit
