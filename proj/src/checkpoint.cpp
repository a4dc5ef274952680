#include "flagdit/checkpoint.hpp"

#include "flagdit/binary_io.hpp"
#include "flagdit/errors.hpp"
#include "flagdit/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace flagdit {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'T', '1'};

std::string shape_token(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw FormatError("checkpoint: bad " + what + " '" + text + "'");
    return v;
}

Shape parse_shape(const std::string& text) {
    Shape s;
    std::size_t start = 0;
    while (true) {
        const auto x = text.find('x', start);
        s.push_back(parse_u64(text.substr(start, x - start), "shape"));
        if (x == std::string::npos) break;
        start = x + 1;
    }
    return s;
}

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const FlagDiT& model) {
    std::string header;
    for (const auto& [key, value] : model_fields(model.config()))
        header += "config." + key + " = " + value + "\n";
    const auto params = model.parameters();
    std::uint64_t offset = 0;
    for (const auto& p : params) {
        header += "tensor " + p.name + " " + shape_token(p.tensor.shape()) + " " +
                  std::to_string(offset) + "\n";
        offset += p.tensor.numel() * 4;
    }

    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    binary::put_u32(out, kCheckpointVersion);
    binary::put_u64(out, header.size());
    out.insert(out.end(), header.begin(), header.end());
    out.reserve(out.size() + offset);
    for (const auto& p : params)
        for (real v : p.tensor.data()) binary::put_f32(out, static_cast<float>(v));
    return out;
}

CheckpointHeader read_checkpoint_header(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
        throw FormatError("checkpoint: missing FDT1 magic");
    binary::Reader r(bytes, 4);
    CheckpointHeader h;
    h.version = r.u32();
    if (h.version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(h.version));
    const std::uint64_t len = r.u64();
    if (len > bytes.size() - r.position())
        throw FormatError("checkpoint: header length exceeds file size");
    h.payload_offset = r.position() + len;
    std::istringstream text(std::string(bytes.begin() + std::ptrdiff_t(r.position()),
                                        bytes.begin() + std::ptrdiff_t(h.payload_offset)));

    std::string line;
    while (std::getline(text, line)) {
        if (line.empty()) continue;
        if (line.rfind("config.", 0) == 0) {
            const auto eq = line.find(" = ");
            if (eq == std::string::npos) throw FormatError("checkpoint: bad header line '" + line + "'");
            try {
                set_model_field(h.config, line.substr(7, eq - 7), line.substr(eq + 3));
            } catch (const ConfigError& e) {
                throw FormatError(std::string("checkpoint: ") + e.what());
            }
        } else if (line.rfind("tensor ", 0) == 0) {
            std::istringstream fields(line.substr(7));
            std::string name, shape, offset, extra;
            if (!(fields >> name >> shape >> offset) || (fields >> extra))
                throw FormatError("checkpoint: bad tensor line '" + line + "'");
            h.tensors.push_back({name, parse_shape(shape), parse_u64(offset, "offset")});
        } else {
            throw FormatError("checkpoint: bad header line '" + line + "'");
        }
    }

    const std::uint64_t payload = bytes.size() - h.payload_offset;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
    for (const auto& t : h.tensors) {
        const std::uint64_t size = shape_numel(t.shape) * 4;
        if (t.offset > payload || size > payload - t.offset)
            throw FormatError("checkpoint: tensor " + t.name + " lies outside the payload");
        spans.emplace_back(t.offset, t.offset + size);
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i)
        if (spans[i].first < spans[i - 1].second)
            throw FormatError("checkpoint: tensor directory entries overlap");
    return h;
}

FlagDiT decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    const CheckpointHeader h = read_checkpoint_header(bytes);
    try {
        h.config.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    FlagDiT model(h.config);
    const auto params = model.parameters();
    if (params.size() != h.tensors.size())
        throw FormatError("checkpoint: expected " + std::to_string(params.size()) +
                          " tensors, found " + std::to_string(h.tensors.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = h.tensors[i];
        Tensor target = params[i].tensor;
        if (entry.name != params[i].name || entry.shape != target.shape())
            throw FormatError("checkpoint: tensor " + std::to_string(i) + " is " + entry.name + " " +
                              shape_str(entry.shape) + ", model expects " + params[i].name + " " +
                              shape_str(target.shape()));
        binary::Reader r(bytes, h.payload_offset + entry.offset);
        for (real& v : target.mutable_data()) v = static_cast<real>(r.f32());
    }
    return model;
}

void save_checkpoint(const std::string& path, const FlagDiT& model) {
    binary::write_file(path, encode_checkpoint(model));
}

FlagDiT load_checkpoint(const std::string& path) { return decode_checkpoint(binary::read_file(path)); }

} // namespace flagdit
