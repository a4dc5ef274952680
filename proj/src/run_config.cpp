#include "flagdit/run_config.hpp"

#include "flagdit/binary_io.hpp"
#include "flagdit/errors.hpp"
#include "flagdit/synthetic.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>

namespace flagdit {

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
    T v{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end || text.empty())
        throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
    return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

using Setter = std::function<void(std::string_view)>;
using Getter = std::function<std::string()>;

struct Field {
    std::string key;
    Getter get;
    Setter set;
};

template <class T>
Field size_field(std::string key, T& ref) {
    return {key, [&ref] { return std::to_string(ref); },
            [&ref, key](std::string_view v) { ref = parse_number<T>(key, v); }};
}

Field double_field(std::string key, double& ref) {
    return {key, [&ref] { return format_double(ref); },
            [&ref, key](std::string_view v) { ref = parse_number<double>(key, v); }};
}

Field bool_field(std::string key, bool& ref) {
    return {key, [&ref] { return bool_str(ref); },
            [&ref, key](std::string_view v) { ref = parse_bool(key, v); }};
}

std::vector<Field> model_table(FlagDiTConfig& c) {
    return {
        size_field("layers", c.layers),       size_field("heads", c.heads),
        size_field("hidden", c.hidden),       size_field("patch", c.patch),
        double_field("rope_base", c.rope_base), size_field("mlp_ratio", c.mlp_ratio),
        size_field("vocab", c.vocab),         size_field("channels", c.channels),
        size_field("time_freq_dim", c.time_freq_dim),
        size_field("train_height", c.train_height),
        size_field("train_width", c.train_width),
        size_field("train_frames", c.train_frames),
        size_field("seed", c.seed),
    };
}

std::vector<Field> train_table(TrainConfig& c) {
    return {
        double_field("lr", c.lr),
        size_field("batch", c.batch),
        size_field("steps", c.steps),
        double_field("beta1", c.beta1),
        double_field("beta2", c.beta2),
        double_field("adam_eps", c.adam_eps),
        double_field("weight_decay", c.weight_decay),
        double_field("grad_clip", c.grad_clip),
        double_field("cfg_dropout", c.cfg_dropout),
        {"time_sampler", [&c] { return to_string(c.time_sampler); },
         [&c](std::string_view v) { c.time_sampler = parse_time_sampler(v); }},
        {"schedule", [&c] { return to_string(c.schedule); },
         [&c](std::string_view v) { c.schedule = parse_schedule(v); }},
        size_field("log_every", c.log_every),
        size_field("seed", c.seed),
        bool_field("record_wallclock", c.record_wallclock),
    };
}

std::vector<Field> sampler_table(SamplerConfig& c) {
    return {
        size_field("steps", c.steps),
        double_field("shift", c.shift),
        double_field("cfg_scale", c.cfg_scale),
        {"extrapolation_scale",
         [&c] { return c.extrapolation_scale ? format_double(*c.extrapolation_scale) : "auto"; },
         [&c](std::string_view v) {
             if (v == "auto") c.extrapolation_scale.reset();
             else c.extrapolation_scale = parse_number<double>("extrapolation_scale", v);
         }},
        bool_field("proportional_attention", c.proportional_attention),
    };
}

std::vector<Field> data_table(SyntheticSpec& c) {
    return {
        {"kind", [&c] { return c.kind; }, [&c](std::string_view v) { c.kind = std::string(v); }},
        size_field("points", c.points),
        size_field("modes", c.modes),
        double_field("radius", c.radius),
        size_field("per_class", c.per_class),
        size_field("height", c.height),
        size_field("width", c.width),
        size_field("period", c.period),
        size_field("pretrain_size", c.pretrain_size),
        size_field("pretrain_steps", c.pretrain_steps),
        size_field("seed", c.seed),
    };
}

const Field* find(const std::vector<Field>& table, std::string_view key) {
    for (const auto& f : table)
        if (f.key == key) return &f;
    return nullptr;
}

} // namespace

void SyntheticSpec::validate() const {
    if (kind == "gauss2d") {
        if (points < 1 || modes < 1) throw ConfigError("data: gauss2d needs points and modes >= 1");
        if (!(radius >= 0)) throw ConfigError("data: radius must be >= 0");
    } else if (kind == "patterns") {
        if (per_class < 1) throw ConfigError("data: per_class must be at least 1");
        if (period < 2) throw ConfigError("data: period must be at least 2");
        if (height < 1 || width < 1) throw ConfigError("data: image size must be positive");
    } else {
        throw ConfigError("data: unknown kind '" + kind + "' (expected gauss2d or patterns)");
    }
    if ((pretrain_size == 0) != (pretrain_steps == 0))
        throw ConfigError("data: pretrain_size and pretrain_steps must be set together");
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    sampler.validate();
    data.validate();
    if (data.kind == "gauss2d" && (model.channels != 2 || model.patch != 1))
        throw ConfigError("gauss2d data needs model channels = 2 and patch = 1");
    if (data.kind == "patterns" && model.channels != 1)
        throw ConfigError("pattern data needs model channels = 1");
    if (data.kind == "patterns" && model.vocab <= std::size(kPatternClasses))
        throw ConfigError("pattern data needs vocab > " + std::to_string(std::size(kPatternClasses)));
    if (data.kind == "gauss2d" && model.vocab <= data.modes)
        throw ConfigError("gauss2d data needs vocab > modes");
}

std::vector<std::pair<std::string, std::string>> model_fields(const FlagDiTConfig& config) {
    FlagDiTConfig copy = config;
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : model_table(copy)) out.emplace_back(f.key, f.get());
    return out;
}

void set_model_field(FlagDiTConfig& config, std::string_view key, std::string_view value) {
    const auto table = model_table(config);
    const Field* f = find(table, key);
    if (!f) throw ConfigError("unknown model field '" + std::string(key) + "'");
    f->set(value);
}

RunConfig parse_run_config(std::string_view text, const std::string& source) {
    RunConfig cfg;
    std::string section;
    std::map<std::string, std::size_t> seen;
    bool model_fields_set = false;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        const auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };

        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where() + "malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section != "model" && section != "train" && section != "sampler" &&
                section != "data")
                throw ConfigError(where() + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where() + "expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError(where() + "key '" + key + "' outside a section");
        const std::string full = section + "." + key;
        if (auto it = seen.find(full); it != seen.end())
            throw ConfigError(where() + "duplicate key " + full + " (first set on line " +
                              std::to_string(it->second) + ")");
        seen[full] = line_no;

        try {
            if (section == "model" && key == "preset") {
                if (model_fields_set)
                    throw ConfigError("preset must precede the other model keys");
                cfg.model = FlagDiTConfig::preset(value);
                continue;
            }
            std::vector<Field> table;
            if (section == "model") table = model_table(cfg.model);
            else if (section == "train") table = train_table(cfg.train);
            else if (section == "sampler") table = sampler_table(cfg.sampler);
            else table = data_table(cfg.data);
            const Field* f = find(table, key);
            if (!f) throw ConfigError("unknown key " + full);
            f->set(value);
            if (section == "model") model_fields_set = true;
        } catch (const ConfigError& e) {
            throw ConfigError(where() + e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = binary::read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError("cannot read config '" + path + "': " + e.what());
    }
    return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                            path);
}

std::string format_run_config(const RunConfig& config) {
    RunConfig c = config;
    std::string out;
    auto emit = [&out](const char* name, const std::vector<Field>& table) {
        out += "[" + std::string(name) + "]\n";
        for (const auto& f : table) out += f.key + " = " + f.get() + "\n";
        out += "\n";
    };
    emit("model", model_table(c.model));
    emit("train", train_table(c.train));
    emit("sampler", sampler_table(c.sampler));
    emit("data", data_table(c.data));
    return out;
}

std::vector<Example> make_dataset(const SyntheticSpec& spec, std::size_t patch,
                                  std::size_t size_override) {
    spec.validate();
    if (spec.kind == "gauss2d")
        return mixture_examples(make_2d_mixture(spec.points, spec.modes, spec.radius, spec.seed));
    const std::size_t h = size_override ? size_override : spec.height;
    const std::size_t w = size_override ? size_override : spec.width;
    return pattern_examples(spec.per_class, h, w, spec.period, patch, spec.seed);
}

} // namespace flagdit
