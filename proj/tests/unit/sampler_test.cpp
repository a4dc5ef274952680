#include "flagdit/errors.hpp"
#include "flagdit/sampler.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace flagdit;

namespace {

std::vector<real> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

FlagDiTConfig tiny() {
    FlagDiTConfig c = FlagDiTConfig::preset("tiny");
    c.train_height = 16;
    c.train_width = 16;
    c.seed = 2;
    return c;
}

SamplerConfig config(std::size_t steps, double shift = 6.0, double cfg = 4.0) {
    SamplerConfig c;
    c.steps = steps;
    c.shift = shift;
    c.cfg_scale = cfg;
    return c;
}

void perturb(FlagDiT& model, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 0.2);
    for (auto& p : model.parameters())
        for (auto& v : p.tensor.mutable_data()) v += static_cast<real>(normal(rng));
}

} // namespace

// --- time shifting ----------------------------------------------------------------

TEST(TimeShift, Examples) {
    for (double m : {1.0, 2.0, 6.0, 37.5}) {
        EXPECT_EQ(time_shift(0.0, m), 0.0);
        EXPECT_EQ(time_shift(1.0, m), 1.0);
    }
    EXPECT_EQ(time_shift(0.5, 2.0), 1.0 / 3.0);
    for (double t = 0; t <= 1.0; t += 0.0625) EXPECT_EQ(time_shift(t, 1.0), t);
    EXPECT_THROW(time_shift(0.5, 0.9), ConfigError);
    EXPECT_THROW(time_shift(1.5, 2.0), ContractError);
}

TEST(TimeShift, MonotoneAndBelowIdentity) {
    for (double m : {1.5, 3.0, 6.0}) {
        double prev = -1;
        for (int i = 0; i <= 100; ++i) {
            const double t = i / 100.0, s = time_shift(t, m);
            EXPECT_GT(s, prev);
            EXPECT_LE(s, t);
            prev = s;
        }
    }
}

TEST(TimeGrid, Examples) {
    EXPECT_EQ(make_time_grid(2, 1.0), (std::vector<double>{0.0, 0.5, 1.0}));
    EXPECT_EQ(make_time_grid(2, 2.0), (std::vector<double>{0.0, 1.0 / 3.0, 1.0}));
    EXPECT_THROW(make_time_grid(0, 1.0), ConfigError);
}

TEST(TimeGrid, StrictlyIncreasingWithExactEndpoints) {
    for (std::size_t n : {1u, 3u, 50u, 257u})
        for (double m : {1.0, 2.5, 6.0, 100.0}) {
            const auto g = make_time_grid(n, m);
            ASSERT_EQ(g.size(), n + 1);
            EXPECT_EQ(g.front(), 0.0);
            EXPECT_EQ(g.back(), 1.0);
            for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i - 1], g[i]);
        }
}

TEST(PooledNoise, StdIsInverseOfPoolSize) {
    Rng rng(1);
    for (std::size_t m : {1u, 2u, 4u, 8u}) {
        const double sd = snr_pooled_noise_std(m, 100000, rng);
        EXPECT_NEAR(sd * m, 1.0, 0.02) << "m=" << m;
    }
}

// --- guidance ----------------------------------------------------------------------

TEST(Cfg, ExactEndpointsAndLinearity) {
    Rng rng(2);
    const Tensor c = gaussian_like({4, 3}, rng), u = gaussian_like({4, 3}, rng);
    EXPECT_EQ(values(cfg_velocity(c, u, 1.0)), values(c));
    EXPECT_EQ(values(cfg_velocity(c, u, 0.0)), values(u));
    const Tensor two = cfg_velocity(c, Tensor({4, 3}), 2.0);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(two.data()[i], 2 * c.data()[i]);
    // Affine in w: f(w) = f(0) + w·(f(1) − f(0)).
    for (double w : {0.5, 3.0, 7.5}) {
        const Tensor v = cfg_velocity(c, u, w);
        for (std::size_t i = 0; i < 12; ++i)
            EXPECT_NEAR(v.data()[i], u.data()[i] + w * (c.data()[i] - u.data()[i]), 1e-5);
    }
    EXPECT_THROW(cfg_velocity(c, Tensor({3, 4}), 2.0), DimensionError);
}

// --- proportional attention ------------------------------------------------------

TEST(ProportionalScale, Examples) {
    EXPECT_EQ(proportional_scale(73, 73), 1.0);
    EXPECT_NEAR(proportional_scale(441, 441.0 * 441.0), std::sqrt(2.0), 1e-6);
    EXPECT_EQ(proportional_scale(441, 100), 1.0);
    EXPECT_THROW(proportional_scale(1, 10), ContractError);
}

// --- Euler ------------------------------------------------------------------------

TEST(Euler, ConstantFieldIsExact) {
    // Powers of two keep every partial sum exact in float.
    const Tensor c = Tensor::full({2, 4}, 0.75f);
    for (std::size_t n : {1u, 2u, 8u, 64u}) {
        const auto grid = make_time_grid(n, 1.0);
        const Tensor x0 = Tensor::full({2, 4}, 0.5f);
        const Tensor x1 = euler_integrate([&](const Tensor&, double) { return c; }, x0, grid);
        for (real v : x1.data()) EXPECT_EQ(v, 1.25f) << n;
    }
}

TEST(Euler, ConstantFieldShiftedGridWithinRounding) {
    Rng rng(3);
    const Tensor c = gaussian_like({4, 12}, rng);
    const SequenceLayout layout{4, 4, 1, 2};
    for (std::size_t n : {1u, 7u, 50u}) {
        Rng a(4), b(4);
        const LatentFrameGrid out =
            euler_solve([&](const Tensor&, double) { return c; }, layout, 3, config(n), a);
        const Tensor eps = gaussian_like({4, 12}, b);
        // x_N = ε + c·Σ(t_{i+1} − t_i) = ε + c, up to float accumulation.
        const Tensor got = patchify(out, 2);
        for (std::size_t i = 0; i < 48; ++i)
            EXPECT_NEAR(got.data()[i], eps.data()[i] + c.data()[i], 1e-5) << n;
    }
}

TEST(EulerSolve, UntrainedModelReturnsNoise) {
    const FlagDiT model(tiny());
    const SequenceLayout layout{8, 8, 1, 2};
    const std::vector<std::size_t> prompt{3};
    Rng rng(5), again(5);
    const LatentFrameGrid out = euler_solve(model, layout, prompt, config(6), rng);
    const Tensor eps = gaussian_like({16, 4}, again);
    const Tensor want = unpatchify(decode_sequence(make_sequence(layout, eps)), 2).values;
    EXPECT_EQ(values(out.values), values(want));
}

TEST(EulerSolve, DeterministicUnderGuidanceAndExtrapolation) {
    FlagDiT model(tiny());
    perturb(model, 6);
    const std::vector<std::size_t> prompt{2};
    Rng a(7), b(7), c(8);
    const auto x = extrapolate_sample(model, 20, 20, 1, prompt, config(4), a);
    const auto y = extrapolate_sample(model, 20, 20, 1, prompt, config(4), b);
    const auto z = extrapolate_sample(model, 20, 20, 1, prompt, config(4), c);
    EXPECT_EQ(x.values.shape(), (Shape{20, 20, 1, 1}));
    EXPECT_EQ(values(x.values), values(y.values));
    EXPECT_NE(values(x.values), values(z.values));
}

TEST(GuidedVelocity, SkipsUnneededPass) {
    FlagDiT model(tiny());
    perturb(model, 9);
    const SequenceLayout layout{8, 8, 1, 2};
    Rng rng(10);
    const Tensor x = gaussian_like({16, 4}, rng);
    const TokenSequence skel = make_sequence(layout, Tensor({16, 4}));
    const std::vector<std::size_t> prompt{4};
    TokenSequence seq = make_sequence(layout, x);
    NoGradGuard ng;
    EXPECT_EQ(values(guided_velocity(model, skel, x, 0.3, prompt, 1.0)),
              values(model.forward(seq, 0.3, prompt)));
    EXPECT_EQ(values(guided_velocity(model, skel, x, 0.3, prompt, 0.0)),
              values(model.forward(seq, 0.3, unconditional_prompt())));
}

// --- extrapolation ---------------------------------------------------------------

TEST(Extrapolation, PlanFor16To24) {
    const FlagDiTConfig mc = tiny();
    const ExtrapolationPlan plan = plan_extrapolation(mc, 24, 24, 1, config(10));
    EXPECT_EQ(plan.train_length, 73u);
    EXPECT_EQ(plan.infer_length, 157u);
    EXPECT_DOUBLE_EQ(plan.scale, 157.0 / 73.0);
    EXPECT_DOUBLE_EQ(plan.rope_base, ntk_scale_base(mc.rope_base, 157.0 / 73.0, mc.head_dim()));
    EXPECT_DOUBLE_EQ(plan.prop_scale, proportional_scale(73, 157));
}

TEST(Extrapolation, TrainingResolutionIsPlainSampling) {
    FlagDiT model(tiny());
    perturb(model, 11);
    const FlagDiTConfig mc = model.config();
    const ExtrapolationPlan plan = plan_extrapolation(mc, 16, 16, 1, config(3));
    EXPECT_EQ(plan.scale, 1.0);
    EXPECT_EQ(plan.rope_base, mc.rope_base);
    EXPECT_EQ(plan.prop_scale, 1.0);
    const std::vector<std::size_t> prompt{1};
    Rng a(12), b(12);
    const auto x = extrapolate_sample(model, 16, 16, 1, prompt, config(3), a);
    const auto y = euler_solve(model, SequenceLayout{16, 16, 1, 2}, prompt, config(3), b);
    EXPECT_EQ(values(x.values), values(y.values));
}

TEST(Extrapolation, DownscaleKeepsBaseAndOverrides) {
    const FlagDiTConfig mc = tiny();
    const ExtrapolationPlan down = plan_extrapolation(mc, 8, 8, 1, config(3));
    EXPECT_LT(down.scale, 1.0);
    EXPECT_EQ(down.rope_base, mc.rope_base);
    EXPECT_EQ(down.prop_scale, 1.0);
    SamplerConfig c = config(3);
    c.extrapolation_scale = 4.0;
    c.proportional_attention = false;
    const ExtrapolationPlan over = plan_extrapolation(mc, 24, 24, 1, c);
    EXPECT_EQ(over.scale, 4.0);
    EXPECT_EQ(over.prop_scale, 1.0);
    EXPECT_THROW(plan_extrapolation(mc, 23, 24, 1, config(3)), LayoutError);
}

TEST(SamplerConfig, Validate) {
    EXPECT_NO_THROW(SamplerConfig{}.validate());
    EXPECT_THROW(config(0).validate(), ConfigError);
    EXPECT_THROW(config(5, 0.5).validate(), ConfigError);
    EXPECT_THROW(config(5, 6.0, -1.0).validate(), ConfigError);
}
