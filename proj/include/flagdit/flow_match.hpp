#pragma once

#include "flagdit/tensor.hpp"

#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace flagdit {

using Rng = std::mt19937_64;

/// Interpolation path x_t = α(t)·x + β(t)·ε between noise (t = 0) and data (t = 1).
enum class Schedule { Linear, VpCosine };

std::string to_string(Schedule s);
Schedule parse_schedule(std::string_view name);

struct ScheduleCoefficients {
    double alpha;
    double beta;
    double alpha_dot;
    double beta_dot;
};

ScheduleCoefficients coefficients(Schedule schedule, double t);

Tensor interpolate(const Tensor& x, const Tensor& noise, double t, Schedule schedule = Schedule::Linear);
/// α̇(t)·x + β̇(t)·ε; for the linear path this is x − ε.
Tensor target_velocity(const Tensor& x, const Tensor& noise, double t,
                       Schedule schedule = Schedule::Linear);

/// Mean squared error between v_pred and the target velocity over the rows
/// selected by `row_mask` (all rows when empty). Differentiable in v_pred.
Tensor cfm_loss(const Tensor& v_pred, const Tensor& x, const Tensor& noise, double t,
                Schedule schedule = Schedule::Linear, const std::vector<bool>& row_mask = {});

/// Logistic-normal time: t = 1/(1 + e^(−z)), z ~ N(0, 1).
double sample_t_lognorm(Rng& rng);
double sample_t_uniform(Rng& rng);

/// Training draws are kept away from the endpoints by this margin.
inline constexpr double kTimeClamp = 1e-5;

/// Standard normal tensor drawn element by element in row-major order.
Tensor gaussian_like(const Shape& shape, Rng& rng);

} // namespace flagdit
