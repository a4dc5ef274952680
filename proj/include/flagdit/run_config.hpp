#pragma once

#include "flagdit/model.hpp"
#include "flagdit/sampler.hpp"
#include "flagdit/trainer.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace flagdit {

struct SyntheticSpec {
    std::string kind = "patterns";  // gauss2d | patterns
    // gauss2d
    std::size_t points = 4096;
    std::size_t modes = 1;
    double radius = 0.0;
    // patterns
    std::size_t per_class = 64;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t period = 4;
    // Optional first stage at a lower square resolution (0 = single stage).
    std::size_t pretrain_size = 0;
    std::size_t pretrain_steps = 0;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const SyntheticSpec&) const = default;
};

/// Everything a `train` run needs, read from an INI-style file:
///
///   # comment
///   [model]
///   preset = tiny
///   hidden = 32
///   [train]
///   lr = 0.001
///
/// Sections are model, train, sampler and data. Unknown sections or keys are
/// errors. `preset` (model section) resets the layer/head/width fields and
/// must come before any of them.
struct RunConfig {
    FlagDiTConfig model;
    TrainConfig train;
    SamplerConfig sampler;
    SyntheticSpec data;

    void validate() const;
};

RunConfig parse_run_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);
/// Canonical text form; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& config);

/// key/value pairs of every model field, values formatted losslessly.
std::vector<std::pair<std::string, std::string>> model_fields(const FlagDiTConfig& config);
/// Sets one model field from its text form; throws ConfigError on bad keys or values.
void set_model_field(FlagDiTConfig& config, std::string_view key, std::string_view value);

/// Builds the training examples described by `spec` for a model with patch size `patch`.
std::vector<Example> make_dataset(const SyntheticSpec& spec, std::size_t patch,
                                  std::size_t size_override = 0);

} // namespace flagdit
