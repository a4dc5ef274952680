#include "flagdit/flow_match.hpp"

#include "flagdit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flagdit {

std::string to_string(Schedule s) { return s == Schedule::Linear ? "linear" : "vp_cosine"; }

Schedule parse_schedule(std::string_view name) {
    if (name == "linear") return Schedule::Linear;
    if (name == "vp_cosine") return Schedule::VpCosine;
    throw ConfigError("unknown schedule '" + std::string(name) + "'");
}

ScheduleCoefficients coefficients(Schedule schedule, double t) {
    if (schedule == Schedule::Linear) return {t, 1.0 - t, 1.0, -1.0};
    constexpr double half_pi = std::numbers::pi / 2;
    // cos(π/2) is not exactly zero in floating point; pin the endpoint.
    const double alpha = t == 1.0 ? 1.0 : std::sin(half_pi * t);
    const double beta = t == 1.0 ? 0.0 : std::cos(half_pi * t);
    return {alpha, beta, half_pi * std::cos(half_pi * t), -half_pi * std::sin(half_pi * t)};
}

namespace {

Tensor combine(const Tensor& x, const Tensor& noise, double a, double b, const char* op) {
    if (x.shape() != noise.shape())
        throw DimensionError(std::string(op) + ": data " + shape_str(x.shape()) + " vs noise " +
                             shape_str(noise.shape()));
    Tensor out(x.shape());
    auto dst = out.mutable_data();
    auto xs = x.data(), es = noise.data();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] = static_cast<real>(a * double(xs[i]) + b * double(es[i]));
    return out;
}

} // namespace

Tensor interpolate(const Tensor& x, const Tensor& noise, double t, Schedule schedule) {
    const auto c = coefficients(schedule, t);
    return combine(x, noise, c.alpha, c.beta, "interpolate");
}

Tensor target_velocity(const Tensor& x, const Tensor& noise, double t, Schedule schedule) {
    const auto c = coefficients(schedule, t);
    return combine(x, noise, c.alpha_dot, c.beta_dot, "target_velocity");
}

Tensor cfm_loss(const Tensor& v_pred, const Tensor& x, const Tensor& noise, double t,
                Schedule schedule, const std::vector<bool>& row_mask) {
    Tensor target = target_velocity(x, noise, t, schedule);
    if (v_pred.shape() != target.shape())
        throw DimensionError("cfm_loss: prediction " + shape_str(v_pred.shape()) + " vs target " +
                             shape_str(target.shape()));
    if (row_mask.empty()) return mean(square(sub(v_pred, target)));
    if (v_pred.rank() != 2 || row_mask.size() != v_pred.dim(0))
        throw DimensionError("cfm_loss: mask of " + std::to_string(row_mask.size()) +
                             " rows for prediction " + shape_str(v_pred.shape()));
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < row_mask.size(); ++i)
        if (row_mask[i]) rows.push_back(i);
    if (rows.empty()) throw ContractError("cfm_loss: mask selects no rows");
    return mean(square(sub(gather_rows(v_pred, rows), gather_rows(target, rows))));
}

double sample_t_lognorm(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double t = 1.0 / (1.0 + std::exp(-normal(rng)));
    return std::clamp(t, kTimeClamp, 1.0 - kTimeClamp);
}

double sample_t_uniform(Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    return std::clamp(uniform(rng), kTimeClamp, 1.0 - kTimeClamp);
}

Tensor gaussian_like(const Shape& shape, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor out(shape);
    for (auto& v : out.mutable_data()) v = static_cast<real>(normal(rng));
    return out;
}

} // namespace flagdit
