#include "flagdit/trainer.hpp"

#include "flagdit/binary_io.hpp"
#include "flagdit/errors.hpp"

#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace flagdit {

std::string to_string(TimeSampler s) { return s == TimeSampler::Uniform ? "uniform" : "lognorm"; }

TimeSampler parse_time_sampler(std::string_view name) {
    if (name == "uniform") return TimeSampler::Uniform;
    if (name == "lognorm") return TimeSampler::LogNorm;
    throw ConfigError("unknown time sampler '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("train: lr must be positive");
    if (batch < 1) throw ConfigError("train: batch must be at least 1");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
        throw ConfigError("train: Adam betas must lie in [0, 1)");
    if (!(adam_eps > 0)) throw ConfigError("train: adam_eps must be positive");
    if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
    if (!(grad_clip >= 0)) throw ConfigError("train: grad_clip must be >= 0");
    if (!(cfg_dropout >= 0 && cfg_dropout <= 1))
        throw ConfigError("train: cfg_dropout must lie in [0, 1]");
    if (log_every < 1) throw ConfigError("train: log_every must be at least 1");
}

Example make_example(const LatentFrameGrid& grid, std::vector<std::size_t> prompt,
                     std::size_t patch) {
    return {encode_sequence(patchify(grid, patch), patch), std::move(prompt)};
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, const TrainConfig& config)
    : params_(std::move(params)),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_eps),
      weight_decay_(config.weight_decay) {
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void AdamOptimizer::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, double(t_));
    const double c2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = params_[k];
        if (!p.has_grad()) continue;
        auto w = p.mutable_data();
        auto g = p.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            m[i] = beta1_ * m[i] + (1 - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1 - beta2_) * gi * gi;
            double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
            update += weight_decay_ * double(w[i]);
            w[i] = static_cast<real>(double(w[i]) - lr * update);
        }
    }
}

namespace {

std::vector<Tensor> parameter_handles(const FlagDiT& model) {
    std::vector<Tensor> out;
    for (auto& p : model.parameters()) out.push_back(p.tensor);
    return out;
}

double sample_time(TimeSampler sampler, Rng& rng) {
    return sampler == TimeSampler::LogNorm ? sample_t_lognorm(rng) : sample_t_uniform(rng);
}

} // namespace

StepStats train_step(FlagDiT& model, std::span<const Example> batch, const TrainConfig& config,
                     AdamOptimizer& optimizer, Rng& rng) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    model.zero_grad();

    std::size_t total = 0;
    for (const auto& ex : batch) total += ex.clean.payloads.numel();

    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<double> ts;
    Tensor loss;
    for (const auto& ex : batch) {
        const double t = sample_time(config.time_sampler, rng);
        const bool drop = coin(rng) < config.cfg_dropout;
        const Tensor noise = gaussian_like(ex.clean.payloads.shape(), rng);
        ts.push_back(t);

        TokenSequence noisy = ex.clean;
        noisy.payloads = interpolate(ex.clean.payloads, noise, t, config.schedule);
        const std::vector<std::size_t> null_prompt{0};
        const Tensor v = model.forward(noisy, t, drop ? null_prompt : ex.prompt);
        const double weight = double(ex.clean.payloads.numel()) / double(total);
        Tensor term = scale(cfm_loss(v, ex.clean.payloads, noise, t, config.schedule), weight);
        loss = loss.defined() ? add(loss, term) : term;
    }

    const double value = loss.item();
    auto diagnostics = [&] {
        std::ostringstream os;
        os << "at optimizer step " << optimizer.steps() << ", t = [";
        for (std::size_t i = 0; i < ts.size(); ++i) os << (i ? ", " : "") << ts[i];
        os << "]";
        return os.str();
    };
    if (!std::isfinite(value)) throw NumericError("non-finite loss " + diagnostics());

    loss.backward();

    const std::vector<Tensor> params = parameter_handles(model);
    double sq = 0;
    for (const auto& p : params)
        if (p.has_grad())
            for (real g : p.grad()) sq += double(g) * double(g);
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm))
        throw NumericError("non-finite gradient norm " + diagnostics() + ", loss " +
                           std::to_string(value));
    if (config.grad_clip > 0 && norm > config.grad_clip) {
        const real factor = static_cast<real>(config.grad_clip / norm);
        for (auto p : params)
            if (p.has_grad())
                for (real& g : p.mutable_grad()) g *= factor;
    }
    optimizer.step(config.lr);
    return {value, norm};
}

TrainResult train_stages(FlagDiT& model, std::span<const TrainStage> stages,
                         const TrainConfig& config, const TrainCallback& callback) {
    config.validate();
    Rng rng(config.seed);
    AdamOptimizer optimizer(parameter_handles(model), config);
    TrainResult result;
    const auto start = std::chrono::steady_clock::now();
    std::size_t step = 0;
    for (const auto& stage : stages) {
        if (stage.steps == 0) continue;
        if (stage.dataset.empty()) throw ContractError("train: stage with steps but no data");
        std::uniform_int_distribution<std::size_t> pick(0, stage.dataset.size() - 1);
        std::vector<Example> batch(config.batch);
        for (std::size_t s = 0; s < stage.steps; ++s) {
            for (auto& b : batch) b = stage.dataset[pick(rng)];
            const StepStats stats = train_step(model, batch, config, optimizer, rng);
            result.losses.push_back(stats.loss);
            ++step;
            if (step % config.log_every == 0) {
                LogRecord rec{step, stats.loss, stats.grad_norm, config.lr, 0.0};
                if (config.record_wallclock)
                    rec.wallclock_ms = std::chrono::duration<double, std::milli>(
                                           std::chrono::steady_clock::now() - start)
                                           .count();
                result.log.push_back(rec);
                if (callback) callback(rec);
            }
        }
    }
    return result;
}

TrainResult train_loop(FlagDiT& model, std::span<const Example> dataset, const TrainConfig& config,
                       const TrainCallback& callback) {
    const TrainStage stage{std::vector<Example>(dataset.begin(), dataset.end()), config.steps};
    return train_stages(model, std::span<const TrainStage>(&stage, 1), config, callback);
}

std::uint64_t weight_hash(const FlagDiT& model) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& p : model.parameters()) {
        for (real v : p.tensor.data()) {
            const auto bytes = std::bit_cast<std::array<unsigned char, sizeof(real)>>(v);
            for (unsigned char c : bytes) {
                h ^= c;
                h *= 1099511628211ull;
            }
        }
    }
    return h;
}

std::string loss_csv(std::span<const LogRecord> log) {
    std::string out = "step,loss,grad_norm,lr,wallclock_ms\n";
    char line[160];
    for (const auto& r : log) {
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.3f\n", r.step, r.loss, r.grad_norm,
                      r.lr, r.wallclock_ms);
        out += line;
    }
    return out;
}

void write_loss_csv(const std::string& path, std::span<const LogRecord> log) {
    const std::string text = loss_csv(log);
    binary::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

} // namespace flagdit
