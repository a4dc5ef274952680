#pragma once

#include "flagdit/flow_match.hpp"
#include "flagdit/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace flagdit {

enum class TimeSampler { Uniform, LogNorm };

std::string to_string(TimeSampler s);
TimeSampler parse_time_sampler(std::string_view name);

struct TrainConfig {
    double lr = 1e-4;
    std::size_t batch = 16;
    std::size_t steps = 1000;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 1.0;  // 0 disables clipping
    double cfg_dropout = 0.1;
    TimeSampler time_sampler = TimeSampler::LogNorm;
    Schedule schedule = Schedule::Linear;
    std::size_t log_every = 10;
    std::uint64_t seed = 0;
    // When false the wallclock column is written as 0 so logs compare byte for byte.
    bool record_wallclock = true;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// One training item: the clean token sequence and its prompt ids.
struct Example {
    TokenSequence clean;
    std::vector<std::size_t> prompt;
};

Example make_example(const LatentFrameGrid& grid, std::vector<std::size_t> prompt,
                     std::size_t patch);

/// Adam with decoupled weight decay over a fixed parameter list.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Tensor> params, const TrainConfig& config);

    void step(double lr);
    std::size_t steps() const { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, eps_, weight_decay_;
    std::size_t t_ = 0;
};

struct StepStats {
    double loss = 0;
    double grad_norm = 0;  // before clipping
};

/// Samples t and ε per element, regresses the target velocity on PATCH rows,
/// clips the global gradient norm and applies one Adam update.
StepStats train_step(FlagDiT& model, std::span<const Example> batch, const TrainConfig& config,
                     AdamOptimizer& optimizer, Rng& rng);

struct LogRecord {
    std::size_t step = 0;
    double loss = 0;
    double grad_norm = 0;
    double lr = 0;
    double wallclock_ms = 0;
};

struct TrainResult {
    std::vector<double> losses;  // every step
    std::vector<LogRecord> log;  // every log_every steps
};

using TrainCallback = std::function<void(const LogRecord&)>;

/// Minibatches drawn uniformly with replacement from `dataset`.
TrainResult train_loop(FlagDiT& model, std::span<const Example> dataset, const TrainConfig& config,
                       const TrainCallback& callback = {});

struct TrainStage {
    std::vector<Example> dataset;
    std::size_t steps = 0;
};

/// Sequential stages (e.g. low then high resolution) sharing one optimizer and rng.
TrainResult train_stages(FlagDiT& model, std::span<const TrainStage> stages,
                         const TrainConfig& config, const TrainCallback& callback = {});

/// FNV-1a over every parameter's bytes, in parameter order.
std::uint64_t weight_hash(const FlagDiT& model);

void write_loss_csv(const std::string& path, std::span<const LogRecord> log);
std::string loss_csv(std::span<const LogRecord> log);

} // namespace flagdit
