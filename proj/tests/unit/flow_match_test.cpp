#include "flagdit/errors.hpp"
#include "flagdit/flow_match.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace flagdit;

namespace {

std::vector<real> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

struct Pair {
    Tensor x, eps;
};

Pair random_pair(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = gaussian_like(shape, rng);
    Tensor e = gaussian_like(shape, rng);
    return {x, e};
}

} // namespace

TEST(Schedule, NamesRoundTrip) {
    for (Schedule s : {Schedule::Linear, Schedule::VpCosine}) EXPECT_EQ(parse_schedule(to_string(s)), s);
    EXPECT_THROW(parse_schedule("ve"), ConfigError);
}

TEST(Schedule, BoundaryConditionsExact) {
    for (Schedule s : {Schedule::Linear, Schedule::VpCosine}) {
        const auto c0 = coefficients(s, 0.0), c1 = coefficients(s, 1.0);
        EXPECT_EQ(c0.alpha, 0.0);
        EXPECT_EQ(c0.beta, 1.0);
        EXPECT_EQ(c1.alpha, 1.0);
        EXPECT_EQ(c1.beta, 0.0);
    }
    const auto lin = coefficients(Schedule::Linear, 0.37);
    EXPECT_EQ(lin.alpha, 0.37);
    EXPECT_EQ(lin.alpha_dot, 1.0);
    EXPECT_EQ(lin.beta_dot, -1.0);
    const auto vp = coefficients(Schedule::VpCosine, 0.37);
    EXPECT_NEAR(vp.alpha, std::sin(std::numbers::pi * 0.37 / 2), 1e-15);
    EXPECT_NEAR(vp.beta, std::cos(std::numbers::pi * 0.37 / 2), 1e-15);
}

TEST(Interpolate, Endpoints) {
    const auto [x, eps] = random_pair({4, 3}, 1);
    for (Schedule s : {Schedule::Linear, Schedule::VpCosine}) {
        EXPECT_EQ(values(interpolate(x, eps, 0.0, s)), values(eps));
        EXPECT_EQ(values(interpolate(x, eps, 1.0, s)), values(x));
    }
    const Tensor mid = interpolate(x, eps, 0.5);
    for (std::size_t i = 0; i < mid.numel(); ++i)
        EXPECT_NEAR(mid.data()[i], (x.data()[i] + eps.data()[i]) / 2, 1e-6);
    EXPECT_THROW(interpolate(x, Tensor({3, 4}), 0.5), DimensionError);
}

TEST(TargetVelocity, Examples) {
    const auto [x, eps] = random_pair({4, 3}, 2);
    const Tensor a = target_velocity(x, eps, 0.1), b = target_velocity(x, eps, 0.9);
    EXPECT_EQ(values(a), values(b));
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], x.data()[i] - eps.data()[i]);
    const Tensor vp = target_velocity(x, eps, 0.0, Schedule::VpCosine);
    for (std::size_t i = 0; i < vp.numel(); ++i)
        EXPECT_NEAR(vp.data()[i], std::numbers::pi / 2 * x.data()[i], 1e-6);
    const Tensor zero = target_velocity(x, x, 0.4);
    for (real v : zero.data()) EXPECT_EQ(v, 0);
}

TEST(TargetVelocity, MatchesTimeDerivativeOfInterpolant) {
    const auto [x, eps] = random_pair({3, 4}, 3);
    Rng rng(4);
    const double h = 1e-4;
    for (Schedule s : {Schedule::Linear, Schedule::VpCosine}) {
        for (int i = 0; i < 50; ++i) {
            const double t = 0.01 + 0.98 * sample_t_uniform(rng);
            // Central differences on the coefficients in double; the float
            // tensors would add storage rounding larger than the tolerance.
            const auto cp = coefficients(s, t + h), cm = coefficients(s, t - h);
            const Tensor v = target_velocity(x, eps, t, s);
            for (std::size_t k = 0; k < v.numel(); ++k) {
                const double fd = ((cp.alpha - cm.alpha) * x.data()[k] + (cp.beta - cm.beta) * eps.data()[k]) / (2 * h);
                EXPECT_NEAR(v.data()[k], fd, 1e-4);
            }
        }
    }
}

TEST(CfmLoss, ZeroAtTargetAndMeanSquareAtZero) {
    const auto [x, eps] = random_pair({5, 4}, 5);
    EXPECT_EQ(cfm_loss(target_velocity(x, eps, 0.3), x, eps, 0.3).item(), 0);
    double want = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) want += std::pow(double(x.data()[i]) - eps.data()[i], 2);
    EXPECT_NEAR(cfm_loss(Tensor({5, 4}), x, eps, 0.3).item(), want / 20, 1e-5);
}

TEST(CfmLoss, GradientIsScaledResidual) {
    const auto [x, eps] = random_pair({5, 4}, 6);
    Rng rng(7);
    Tensor pred = gaussian_like({5, 4}, rng);
    pred.set_requires_grad(true);
    cfm_loss(pred, x, eps, 0.6).backward();
    const Tensor target = target_velocity(x, eps, 0.6);
    for (std::size_t i = 0; i < 20; ++i)
        EXPECT_NEAR(pred.grad()[i], 2 * (pred.data()[i] - target.data()[i]) / 20, 1e-6);
    const Tensor fd = finite_diff_grad(
        [&](const Tensor& p) { return double(cfm_loss(p, x, eps, 0.6).item()); }, pred, 1e-2);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(pred.grad()[i], fd.data()[i], 1e-3);
}

TEST(CfmLoss, MaskSelectsRows) {
    const auto [x, eps] = random_pair({3, 2}, 8);
    Tensor pred = target_velocity(x, eps, 0.5).detach();
    pred.mutable_data()[0] += 2;  // row 0 wrong
    EXPECT_EQ(cfm_loss(pred, x, eps, 0.5, Schedule::Linear, {false, true, true}).item(), 0);
    EXPECT_NEAR(cfm_loss(pred, x, eps, 0.5, Schedule::Linear, {true, false, false}).item(), 2.0, 1e-6);
    EXPECT_THROW(cfm_loss(pred, x, eps, 0.5, Schedule::Linear, {false, false, false}), ContractError);
    EXPECT_THROW(cfm_loss(pred, x, eps, 0.5, Schedule::Linear, {true}), DimensionError);
}

TEST(CfmLoss, NonNegative) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto [x, eps] = random_pair({3, 3}, 100 + s);
        Rng rng(s);
        EXPECT_GE(cfm_loss(gaussian_like({3, 3}, rng), x, eps, 0.5).item(), 0);
    }
}

TEST(TimeSampling, LogNormStatistics) {
    Rng rng(9);
    const int n = 100000;
    std::vector<double> ts(n);
    int inside = 0;
    for (auto& t : ts) {
        t = sample_t_lognorm(rng);
        inside += t > 0.25 && t < 0.75;
        ASSERT_GT(t, 0.0);
        ASSERT_LT(t, 1.0);
    }
    std::nth_element(ts.begin(), ts.begin() + n / 2, ts.end());
    EXPECT_GE(ts[n / 2], 0.48);
    EXPECT_LE(ts[n / 2], 0.52);
    // Φ(ln 3) − Φ(−ln 3) = erf(ln 3 / √2)
    const double want = std::erf(std::log(3.0) / std::sqrt(2.0));
    EXPECT_NEAR(want, 0.728, 5e-4);
    EXPECT_NEAR(double(inside) / n, want, 0.01);
}

TEST(TimeSampling, UniformStatistics) {
    Rng rng(10);
    double sum = 0;
    for (int i = 0; i < 100000; ++i) {
        const double t = sample_t_uniform(rng);
        ASSERT_GE(t, 0.0);
        ASSERT_LT(t, 1.0);
        sum += t;
    }
    EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(TimeSampling, SeedReproducesSequence) {
    Rng a(11), b(11);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(sample_t_uniform(a), sample_t_uniform(b));
        EXPECT_EQ(sample_t_lognorm(a), sample_t_lognorm(b));
    }
}
