// flagdit: train, sample, edit, compose, style, gates, inspect.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 runtime or numeric error.

#include "flagdit/apps.hpp"
#include "flagdit/checkpoint.hpp"
#include "flagdit/errors.hpp"
#include "flagdit/run_config.hpp"
#include "flagdit/sampler.hpp"
#include "flagdit/synthetic.hpp"
#include "flagdit/trainer.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace flagdit;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 3;

/// Errors the user can fix by changing arguments or input files.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string require_file(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
    return path;
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        out.emplace_back(text.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::optional<std::size_t> to_size(const std::string& text) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
    return v;
}

/// `name id` or `name = id` per line; '#' starts a comment.
std::map<std::string, std::size_t> read_labels(const std::string& path) {
    std::ifstream is(require_file(path, "labels file"));
    std::map<std::string, std::size_t> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        for (char& c : line)
            if (c == '=') c = ' ';
        std::istringstream fields(line);
        std::string name, id, extra;
        if (!(fields >> name)) continue;
        const auto value = (fields >> id) ? to_size(id) : std::nullopt;
        if (!value || (fields >> extra))
            throw UsageError(path + ":" + std::to_string(line_no) + ": expected 'name id'");
        labels[name] = *value;
    }
    return labels;
}

std::vector<std::size_t> parse_prompt(const std::string& text,
                                      const std::map<std::string, std::size_t>& labels,
                                      std::size_t vocab) {
    std::vector<std::size_t> ids;
    for (const auto& raw : split(text, ',')) {
        const std::string token = trim(raw);
        if (token.empty()) continue;
        std::optional<std::size_t> id = to_size(token);
        if (!id) {
            const auto it = labels.find(token);
            if (it == labels.end()) throw UsageError("unknown prompt token '" + token + "'");
            id = it->second;
        }
        if (*id >= vocab)
            throw UsageError("prompt id " + std::to_string(*id) + " outside the vocabulary of " +
                             std::to_string(vocab));
        ids.push_back(*id);
    }
    if (ids.empty()) throw UsageError("empty prompt '" + text + "'");
    return ids;
}

RegionPrompt parse_region(const std::string& text, const std::map<std::string, std::size_t>& labels,
                          std::size_t vocab) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw UsageError("region '" + text + "' must look like r0,c0,r1,c1:prompt");
    const auto coords = split(text.substr(0, colon), ',');
    if (coords.size() != 4) throw UsageError("region '" + text + "' needs four box coordinates");
    std::size_t v[4];
    for (int i = 0; i < 4; ++i) {
        const auto c = to_size(trim(coords[i]));
        if (!c) throw UsageError("bad region coordinate '" + coords[i] + "'");
        v[i] = *c;
    }
    return {parse_prompt(text.substr(colon + 1), labels, vocab), RegionBox{v[0], v[1], v[2], v[3]}};
}

std::string with_extension(const std::string& path, const std::string& ext) {
    return fs::path(path).replace_extension(ext).string();
}

void write_outputs(const std::string& path, const LatentFrameGrid& grid) {
    write_grid(path, grid);
    std::cout << "wrote " << path << "\n";
    if (grid.channels() == 1 || grid.channels() == 3) {
        const std::string preview = with_extension(path, grid.channels() == 1 ? ".pgm" : ".ppm");
        write_preview(preview, grid);
        std::cout << "wrote " << preview << "\n";
    }
}

/// Sampling flags shared by sample, edit, compose and style.
struct SampleFlags {
    std::string ckpt;
    std::string labels;
    std::size_t steps = 50;
    double shift = 6.0;
    double cfg = 4.0;
    std::uint64_t seed = 0;
    std::optional<double> extrapolation_scale;
    bool no_prop_attention = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--ckpt", ckpt, "Checkpoint (FDT1)")->required();
        cmd->add_option("--labels", labels, "File mapping label names to prompt ids");
        cmd->add_option("--steps", steps, "Euler steps")->capture_default_str();
        cmd->add_option("--shift", shift, "Time shift m")->capture_default_str();
        cmd->add_option("--cfg", cfg, "Classifier-free guidance scale")->capture_default_str();
        cmd->add_option("--seed", seed, "Noise seed")->capture_default_str();
        cmd->add_option("--extrapolation-scale", extrapolation_scale,
                        "Override the NTK scale s (default: L'/L)");
        cmd->add_flag("--no-prop-attention", no_prop_attention,
                      "Disable proportional attention when extrapolating");
    }

    SamplerConfig sampler() const {
        SamplerConfig c;
        c.steps = steps;
        c.shift = shift;
        c.cfg_scale = cfg;
        c.extrapolation_scale = extrapolation_scale;
        c.proportional_attention = !no_prop_attention;
        c.validate();
        return c;
    }

    std::map<std::string, std::size_t> label_map() const {
        return labels.empty() ? std::map<std::string, std::size_t>{} : read_labels(labels);
    }
};

struct GridFlags {
    std::size_t height = 0, width = 0, frames = 0;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--height", height, "Grid height (default: training height)");
        cmd->add_option("--width", width, "Grid width (default: training width)");
        cmd->add_option("--frames", frames, "Frames (default: training frames)");
    }

    SequenceLayout layout(const FlagDiTConfig& c) const {
        return {height ? height : c.train_height, width ? width : c.train_width,
                frames ? frames : c.train_frames, c.patch};
    }
};

bool at_training_resolution(const FlagDiTConfig& c, const SequenceLayout& layout) {
    return layout.height == c.train_height && layout.width == c.train_width &&
           layout.frames == c.train_frames;
}

// --- commands ------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& out, std::string csv) {
    const RunConfig cfg = load_run_config(require_file(config_path, "config file"));
    FlagDiT model(cfg.model);
    if (csv.empty()) csv = with_extension(out, ".loss.csv");

    std::vector<TrainStage> stages;
    if (cfg.data.pretrain_steps > 0)
        stages.push_back({make_dataset(cfg.data, cfg.model.patch, cfg.data.pretrain_size),
                          cfg.data.pretrain_steps});
    stages.push_back({make_dataset(cfg.data, cfg.model.patch), cfg.train.steps});

    const TrainResult result =
        train_stages(model, stages, cfg.train, [](const LogRecord& r) {
            std::printf("step %zu loss %.6f grad_norm %.4f\n", r.step, r.loss, r.grad_norm);
            std::fflush(stdout);
        });
    save_checkpoint(out, model);
    write_loss_csv(csv, result.log);
    std::cout << "wrote " << out << "\nwrote " << csv << "\n";
    return 0;
}

int cmd_sample(const SampleFlags& f, const GridFlags& g, const std::string& prompt_text,
               const std::string& out) {
    const FlagDiT model = load_checkpoint(require_file(f.ckpt, "checkpoint"));
    const auto& mc = model.config();
    const auto prompt = parse_prompt(prompt_text, f.label_map(), mc.vocab);
    const SamplerConfig sc = f.sampler();
    const SequenceLayout layout = g.layout(mc);
    check_layout(layout);
    Rng rng(f.seed);
    LatentFrameGrid grid;
    if (at_training_resolution(mc, layout)) {
        grid = euler_solve(model, layout, prompt, sc, rng);
    } else {
        const ExtrapolationPlan plan =
            plan_extrapolation(mc, layout.height, layout.width, layout.frames, sc);
        std::printf("extrapolating: L=%zu L'=%zu s=%.6g rope_base=%.6g attention_scale=%.6g\n",
                    plan.train_length, plan.infer_length, plan.scale, plan.rope_base,
                    plan.prop_scale);
        grid = extrapolate_sample(model, layout.height, layout.width, layout.frames, prompt, sc, rng);
    }
    write_outputs(out, grid);
    return 0;
}

int cmd_edit(const SampleFlags& f, const std::string& input, const std::string& prompt_text,
             double lambda, bool no_normalize, const std::string& out) {
    const FlagDiT model = load_checkpoint(require_file(f.ckpt, "checkpoint"));
    const auto& mc = model.config();
    EditRequest req;
    req.input = read_grid(require_file(input, "input grid"));
    req.prompt = parse_prompt(prompt_text, f.label_map(), mc.vocab);
    req.lambda = lambda;
    req.normalize = !no_normalize;
    const SamplerConfig sc = f.sampler();
    const ExtrapolationContext ctx = make_extrapolation_context(
        model, req.input.height(), req.input.width(), req.input.frames(), sc);
    Rng rng(f.seed);
    write_outputs(out, edit(model, req, sc, rng, ctx.options()));
    return 0;
}

int cmd_compose(const SampleFlags& f, const GridFlags& g, const std::vector<std::string>& regions,
                const std::string& out) {
    const FlagDiT model = load_checkpoint(require_file(f.ckpt, "checkpoint"));
    const auto& mc = model.config();
    const auto labels = f.label_map();
    std::vector<RegionPrompt> parsed;
    for (const auto& r : regions) parsed.push_back(parse_region(r, labels, mc.vocab));
    const SamplerConfig sc = f.sampler();
    const SequenceLayout layout = g.layout(mc);
    Rng rng(f.seed);
    ForwardOptions base;
    std::optional<ExtrapolationContext> ctx;
    if (!at_training_resolution(mc, layout)) {
        ctx = make_extrapolation_context(model, layout.height, layout.width, layout.frames, sc);
        base = ctx->options();
    }
    write_outputs(out, compose_sample(model, parsed, layout, sc, rng, base));
    return 0;
}

int cmd_style(const SampleFlags& f, const GridFlags& g, std::vector<std::string> prompts,
              std::size_t batch, bool no_share, const std::string& out) {
    if (batch < 2) throw UsageError("--batch must be at least 2, got " + std::to_string(batch));
    if (prompts.size() == 1) prompts.assign(batch, prompts.front());
    if (prompts.size() != batch)
        throw UsageError("got " + std::to_string(prompts.size()) + " prompts for --batch " +
                         std::to_string(batch));
    const FlagDiT model = load_checkpoint(require_file(f.ckpt, "checkpoint"));
    const auto& mc = model.config();
    const auto labels = f.label_map();
    std::vector<std::vector<std::size_t>> ids;
    for (const auto& p : prompts) ids.push_back(parse_prompt(p, labels, mc.vocab));
    const SamplerConfig sc = f.sampler();
    const SequenceLayout layout = g.layout(mc);
    Rng rng(f.seed);
    ForwardOptions base;
    std::optional<ExtrapolationContext> ctx;
    if (!at_training_resolution(mc, layout)) {
        ctx = make_extrapolation_context(model, layout.height, layout.width, layout.frames, sc);
        base = ctx->options();
    }
    const auto grids = style_batch_sample(model, ids, layout, sc, rng, !no_share, base);
    const fs::path stem = fs::path(out).replace_extension();
    const std::string ext = fs::path(out).has_extension() ? fs::path(out).extension().string() : ".lfg";
    for (std::size_t i = 0; i < grids.size(); ++i)
        write_outputs(stem.string() + "_" + std::to_string(i) + ext, grids[i]);
    return 0;
}

int cmd_gates(const std::string& ckpt, double threshold, const std::string& out) {
    const FlagDiT model = load_checkpoint(require_file(ckpt, "checkpoint"));
    const auto gates = model.gate_values();
    std::string csv = "layer,head,abs_tanh_alpha,active\n";
    std::size_t total = 0, inactive = 0;
    char line[96];
    for (std::size_t l = 0; l < gates.size(); ++l) {
        for (std::size_t h = 0; h < gates[l].size(); ++h) {
            const double a = std::abs(gates[l][h]);
            const bool active = a >= threshold;
            std::snprintf(line, sizeof line, "%zu,%zu,%.9g,%d\n", l, h, a, active ? 1 : 0);
            csv += line;
            ++total;
            inactive += !active;
        }
    }
    if (!out.empty()) {
        std::ofstream os(out, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + out);
        os << csv;
    } else {
        std::cout << csv;
    }
    std::printf("deactivated at threshold %g: %zu/%zu gates (%.1f%%)\n", threshold, inactive, total,
                total ? 100.0 * double(inactive) / double(total) : 0.0);
    return 0;
}

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
    return out;
}

int cmd_inspect(const std::string& ckpt, const GridFlags& g, std::size_t patch) {
    std::optional<FlagDiT> model;
    if (!ckpt.empty()) {
        model.emplace(load_checkpoint(require_file(ckpt, "checkpoint")));
        std::cout << "checkpoint " << ckpt << "\n";
        for (const auto& [k, v] : model_fields(model->config()))
            std::cout << "  " << k << " = " << v << "\n";
        std::cout << "  parameters = " << model->parameter_count() << "\n";
        std::cout << "  train_sequence_length = " << model->config().train_sequence_length() << "\n";
    }
    FlagDiTConfig defaults;
    if (model) defaults = model->config();
    if (patch) defaults.patch = patch;
    if (!model && (!g.height || !g.width))
        throw UsageError("inspect needs --height and --width (or --ckpt)");
    const SequenceLayout layout = g.layout(defaults);
    const LayoutInfo info = layout_for(layout.height, layout.width, layout.frames, layout.patch);
    std::string kinds(info.length, token_kind_symbol(TokenKind::Patch));
    for (auto i : info.nextline_indices) kinds[i] = token_kind_symbol(TokenKind::NextLine);
    for (auto i : info.nextframe_indices) kinds[i] = token_kind_symbol(TokenKind::NextFrame);
    std::cout << "layout " << layout.height << "x" << layout.width << "x" << layout.frames
              << " patch " << layout.patch << "\n"
              << "patch grid " << layout.rows() << "x" << layout.cols() << "\n"
              << "sequence length " << info.length << "\n"
              << "patch tokens " << info.patch_indices.size() << "\n"
              << "nextline indices " << join(info.nextline_indices) << "\n"
              << "nextframe indices " << join(info.nextframe_indices) << "\n"
              << "tokens " << kinds << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Flow-based diffusion transformer toolkit"};
    app.require_subcommand(1);

    std::string config_path, out, csv, prompt, input, ckpt;
    std::vector<std::string> regions, prompts;
    double lambda = 0.2, threshold = 0.01;
    bool no_normalize = false, no_share = false;
    std::size_t batch = 0, patch = 0;
    SampleFlags sf;
    GridFlags gf;

    auto* train = app.add_subcommand("train", "Train on a synthetic dataset");
    train->add_option("--config", config_path, "Run configuration file")->required();
    train->add_option("--out", out, "Checkpoint to write")->required();
    train->add_option("--csv", csv, "Loss log (default: <out>.loss.csv)");

    auto* sample = app.add_subcommand("sample", "Generate a grid from noise");
    sf.add_to(sample);
    gf.add_to(sample);
    sample->add_option("--prompt", prompt, "Prompt ids or label names, comma separated")->required();
    sample->add_option("--out", out, "Output grid (LFG1)")->required();

    auto* edit_cmd = app.add_subcommand("edit", "Re-solve the flow from an existing grid");
    sf.add_to(edit_cmd);
    edit_cmd->add_option("--input", input, "Input grid (LFG1)")->required();
    edit_cmd->add_option("--prompt", prompt, "Prompt ids or label names")->required();
    edit_cmd->add_option("--lambda", lambda, "Start time in [0, 1]")->capture_default_str();
    edit_cmd->add_flag("--no-normalize", no_normalize, "Skip per-channel normalization");
    edit_cmd->add_option("--out", out, "Output grid (LFG1)")->required();

    auto* compose = app.add_subcommand("compose", "Regional prompting");
    sf.add_to(compose);
    gf.add_to(compose);
    compose->add_option("--region", regions, "r0,c0,r1,c1:prompt in patch-grid units (repeatable)")
        ->required();
    compose->add_option("--out", out, "Output grid (LFG1)")->required();

    auto* style = app.add_subcommand("style", "Style-consistent batch");
    sf.add_to(style);
    gf.add_to(style);
    style->add_option("--prompt", prompts, "Prompt per batch element (repeatable)")->required();
    style->add_option("--batch", batch, "Batch size (>= 2)")->required();
    style->add_flag("--no-share", no_share, "Disable anchor key/value sharing");
    style->add_option("--out", out, "Output stem; element i goes to <stem>_i<ext>")->required();

    auto* gates = app.add_subcommand("gates", "Report |tanh(alpha)| per layer and head");
    gates->add_option("--ckpt", ckpt, "Checkpoint (FDT1)")->required();
    gates->add_option("--threshold", threshold, "Gates below this count as deactivated")
        ->capture_default_str();
    gates->add_option("--out", out, "CSV output (default: stdout)");

    auto* inspect = app.add_subcommand("inspect", "Print the token layout for a grid size");
    inspect->add_option("--ckpt", ckpt, "Checkpoint supplying patch size and defaults");
    gf.add_to(inspect);
    inspect->add_option("--patch", patch, "Patch size (default: checkpoint or 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    try {
        if (*train) return cmd_train(config_path, out, csv);
        if (*sample) return cmd_sample(sf, gf, prompt, out);
        if (*edit_cmd) return cmd_edit(sf, input, prompt, lambda, no_normalize, out);
        if (*compose) return cmd_compose(sf, gf, regions, out);
        if (*style) return cmd_style(sf, gf, prompts, batch, no_share, out);
        if (*gates) return cmd_gates(ckpt, threshold, out);
        if (*inspect) return cmd_inspect(ckpt, gf, patch ? patch : (ckpt.empty() ? 1 : 0));
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        // Configuration, layout and shape problems all trace back to user input.
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kUsageError;
}
