#pragma once

// Little-endian helpers shared by the grid and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace flagdit::binary {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& bytes, std::size_t offset = 0)
        : bytes_(bytes), pos_(offset) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_++]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }

    std::size_t position() const { return pos_; }
    void seek(std::size_t pos) { pos_ = pos; }

private:
    void need(std::size_t n) const;

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

} // namespace flagdit::binary
