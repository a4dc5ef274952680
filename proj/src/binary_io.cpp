#include "flagdit/binary_io.hpp"

#include "flagdit/errors.hpp"

#include <fstream>
#include <iterator>

namespace flagdit::binary {

void Reader::need(std::size_t n) const {
    if (pos_ + n > bytes_.size())
        throw FormatError("unexpected end of data at byte " + std::to_string(pos_));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw FormatError("failed writing " + path);
}

} // namespace flagdit::binary
