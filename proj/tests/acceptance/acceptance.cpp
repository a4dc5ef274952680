// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed
// here and never loosened at run time. Exit status is the number of failures
// (capped at 1 for ctest).

#include "flagdit/apps.hpp"
#include "flagdit/checkpoint.hpp"
#include "flagdit/errors.hpp"
#include "flagdit/sampler.hpp"
#include "flagdit/synthetic.hpp"
#include "flagdit/trainer.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

using namespace flagdit;

namespace {

struct Result {
    bool pass = false;
    std::string detail;
    bool warn = false;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<real> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

FlagDiTConfig tiny(std::size_t h, std::size_t w, std::uint64_t seed) {
    FlagDiTConfig c = FlagDiTConfig::preset("tiny");
    c.train_height = h;
    c.train_width = w;
    c.seed = seed;
    return c;
}

// Moves every parameter off its init so zero-initialized paths carry signal.
void perturb(FlagDiT& model, std::uint64_t seed, double scale) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    for (auto& p : model.parameters())
        for (auto& v : p.tensor.mutable_data()) v = static_cast<real>(v + normal(rng));
}

TokenSequence random_sequence(std::size_t h, std::size_t w, std::size_t p, Rng& rng) {
    return encode_sequence(patchify(LatentFrameGrid{gaussian_like({h, w, 1, 1}, rng)}, p), p);
}

std::string run_command(const std::string& cmd, int& status) {
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        status = -1;
        return out;
    }
    std::array<char, 512> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
    const int rc = pclose(pipe);
    status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return out;
}

// --- 1 ---------------------------------------------------------------------------

Result gradient_check() {
    int status = 0;
    std::string line = run_command(FLAGDIT_GRADCHECK_BIN, status);
    while (!line.empty() && line.back() == '\n') line.pop_back();
    // The child prints its own PASS/FAIL prefix and "[1]" tag.
    const auto tag = line.find("[1] ");
    const std::string detail = tag == std::string::npos ? line : line.substr(tag + 4);
    const auto colon = detail.find(": ");
    return {status == 0, colon == std::string::npos ? detail : detail.substr(colon + 2)};
}

// --- 2 ---------------------------------------------------------------------------

Result rope_invariance() {
    constexpr double kTol = 1e-4;
    double worst = 0, magnitude = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        FlagDiT model(tiny(16, 16, seed));
        perturb(model, 100 + seed, 0.1);
        Rng rng(200 + seed);
        const TokenSequence seq = random_sequence(16, 16, 2, rng);
        const std::vector<std::size_t> prompt{1 + seed, 4};
        const Tensor base = model.forward(seq, 0.3 + 0.2 * double(seed), prompt);
        for (real v : base.data()) magnitude = std::max(magnitude, double(std::abs(v)));
        for (std::int64_t delta : {1, 7, 100}) {
            TokenSequence shifted = seq;
            for (auto& p : shifted.positions) p += delta;
            const Tensor out = model.forward(shifted, 0.3 + 0.2 * double(seed), prompt);
            for (std::size_t i = 0; i < out.numel(); ++i)
                worst = std::max(worst, std::abs(double(out.data()[i]) - base.data()[i]));
        }
    }
    return {worst <= kTol && magnitude > 1e-2,
            fmt("max |Δout| %.3g (<= %.0e) for shifts {1,7,100}, 3 models, max |out| %.3g", worst,
                kTol, magnitude)};
}

// --- 3 ---------------------------------------------------------------------------

Result zero_init_neutrality() {
    const FlagDiT model(tiny(16, 16, 42));
    Rng rng(43);
    bool invariant = true;
    for (int i = 0; i < 5; ++i) {
        const TokenSequence seq = random_sequence(16, 16, 2, rng);
        const double t = 0.1 + 0.2 * i;
        const auto ref = values(model.forward(seq, t, unconditional_prompt()));
        for (std::vector<std::size_t> prompt : {std::vector<std::size_t>{1}, {5, 2, 9}, {15}})
            invariant &= values(model.forward(seq, t, prompt)) == ref;
    }

    // Gate report from the CLI on a saved untrained checkpoint.
    const auto dir = std::filesystem::temp_directory_path() / "flagdit_acceptance";
    std::filesystem::create_directories(dir);
    const std::string ckpt = (dir / "init.fdt").string(), csv = (dir / "gates.csv").string();
    save_checkpoint(ckpt, model);
    int status = 0;
    const std::string out = run_command(std::string(FLAGDIT_CLI_BIN) + " gates --ckpt " + ckpt +
                                            " --threshold 1e-12 --out " + csv,
                                        status);
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0, nonzero = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::stringstream ss(line);
        std::string l, h, a;
        std::getline(ss, l, ',');
        std::getline(ss, h, ',');
        std::getline(ss, a, ',');
        nonzero += std::stod(a) != 0.0;
    }
    const std::size_t expected = model.config().layers * model.config().heads;
    const bool all_off = out.find("100.0%") != std::string::npos;
    return {invariant && status == 0 && rows == expected && nonzero == 0 && all_off,
            fmt("prompt-invariant outputs %s; gates CLI rc %d, %zu/%zu rows, %zu nonzero, report '%s'",
                invariant ? "bitwise" : "DIFFER", status, rows, expected, nonzero,
                out.substr(0, out.find('\n')).c_str())};
}

// --- 4 ---------------------------------------------------------------------------

Result codec_roundtrip() {
    Rng rng(4);
    std::uniform_int_distribution<std::size_t> extent(1, 5), patch(1, 4), frames(1, 3), chans(1, 4);
    std::size_t lossless = 0, length_ok = 0;
    constexpr std::size_t kShapes = 100;
    for (std::size_t i = 0; i < kShapes; ++i) {
        const std::size_t p = patch(rng), h = extent(rng), w = extent(rng), T = frames(rng), C = chans(rng);
        const LatentFrameGrid g{gaussian_like({h * p, w * p, T, C}, rng)};
        const TokenSequence seq = encode_sequence(patchify(g, p), p);
        length_ok += seq.size() == T * (h * (w + 1) + 1);
        lossless += values(unpatchify(decode_sequence(seq), p).values) == values(g.values);
    }
    return {lossless == kShapes && length_ok == kShapes,
            fmt("%zu/%zu bitwise round trips, %zu/%zu lengths = T(h(w+1)+1)", lossless, kShapes,
                length_ok, kShapes)};
}

// --- 5 ---------------------------------------------------------------------------

Result schedule_identities() {
    constexpr double kTol = 1e-4, kStep = 1e-4;
    Rng rng(5);
    const Tensor x = gaussian_like({8, 6}, rng), eps = gaussian_like({8, 6}, rng);
    bool boundaries = true, linear = true;
    for (Schedule s : {Schedule::Linear, Schedule::VpCosine}) {
        boundaries &= values(interpolate(x, eps, 0.0, s)) == values(eps);
        boundaries &= values(interpolate(x, eps, 1.0, s)) == values(x);
        const auto c0 = coefficients(s, 0.0), c1 = coefficients(s, 1.0);
        boundaries &= c0.alpha == 0 && c0.beta == 1 && c1.alpha == 1 && c1.beta == 0;
    }
    std::vector<real> diff(x.numel());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = x.data()[i] - eps.data()[i];
    double worst = 0;
    for (int k = 0; k < 50; ++k) {
        const double t = 0.001 + 0.998 * sample_t_uniform(rng);
        linear &= values(target_velocity(x, eps, t)) == diff;
        for (Schedule s : {Schedule::Linear, Schedule::VpCosine}) {
            // Interpolant α(t)x + β(t)ε evaluated in double around t.
            const auto up = coefficients(s, t + kStep), down = coefficients(s, t - kStep);
            const Tensor v = target_velocity(x, eps, t, s);
            for (std::size_t i = 0; i < v.numel(); ++i) {
                const double fd = ((up.alpha - down.alpha) * x.data()[i] +
                                   (up.beta - down.beta) * eps.data()[i]) /
                                  (2 * kStep);
                worst = std::max(worst, std::abs(fd - v.data()[i]));
            }
        }
    }
    return {boundaries && linear && worst <= kTol,
            fmt("boundaries %s, linear v == x-eps %s, max |d/dt x_t - v| %.3g (<= %.0e) at 50 t, both schedules",
                boundaries ? "exact" : "WRONG", linear ? "bitwise" : "DIFFERS", worst, kTol)};
}

// --- 6 ---------------------------------------------------------------------------

Result time_shifting() {
    constexpr double kRel = 0.02;
    constexpr std::size_t kTrials = 100000;
    const bool half = time_shift(0.5, 2.0) == 1.0 / 3.0;
    bool identity = true, increasing = true;
    for (int i = 0; i <= 1000; ++i) identity &= time_shift(i / 1000.0, 1.0) == i / 1000.0;
    for (std::size_t n : {1u, 2u, 10u, 50u, 200u})
        for (double m : {1.0, 2.0, 6.0, 20.0}) {
            const auto g = make_time_grid(n, m);
            increasing &= g.front() == 0.0 && g.back() == 1.0;
            for (std::size_t i = 1; i < g.size(); ++i) increasing &= g[i] > g[i - 1];
        }
    Rng rng(6);
    double worst = 0;
    std::string stds;
    for (std::size_t m : {1u, 2u, 4u, 8u}) {
        const double sd = snr_pooled_noise_std(m, kTrials, rng);
        worst = std::max(worst, std::abs(sd * double(m) - 1.0));
        stds += fmt("%s%zu:%.4f", stds.empty() ? "" : " ", m, sd);
    }
    return {half && identity && increasing && worst <= kRel,
            fmt("shift(0.5,2)=1/3 %s, m=1 identity %s, grids increasing %s, pooled std {%s} max rel dev %.4f (<= %.2f)",
                half ? "exact" : "WRONG", identity ? "yes" : "NO", increasing ? "yes" : "NO",
                stds.c_str(), worst, kRel)};
}

// --- 7 ---------------------------------------------------------------------------

Result ntk_scaling() {
    const double b = ntk_scale_base(1e4, 2.0, 8);
    bool monotone = true;
    double prev = ntk_scale_base(1e4, 1.0, 8);
    for (double s = 1.1; s <= 16.0; s += 0.1) {
        const double v = ntk_scale_base(1e4, s, 8);
        monotone &= v > prev;
        prev = v;
    }
    double worst = 0;
    for (double L : {21.0, 73.0, 441.0, 4096.0})
        worst = std::max(worst, std::abs(proportional_scale(L, L * L) - std::sqrt(2.0)));
    return {std::abs(b - 25198.42) <= 1e-2 && monotone && worst <= 1e-6,
            fmt("b'(1e4, 2, 8) = %.4f (|Δ| <= 1e-2 of 25198.42), monotone in s %s, max |c(L,L²) - √2| %.2g (<= 1e-6)",
                b, monotone ? "yes" : "NO", worst)};
}

// --- 8 ---------------------------------------------------------------------------

Result lognorm_sampler() {
    constexpr int kDraws = 100000;
    Rng rng(8);
    std::vector<double> ts(kDraws);
    int inside = 0;
    for (auto& t : ts) {
        t = sample_t_lognorm(rng);
        inside += t > 0.25 && t < 0.75;
    }
    std::nth_element(ts.begin(), ts.begin() + kDraws / 2, ts.end());
    const double median = ts[kDraws / 2], frac = double(inside) / kDraws;
    return {median >= 0.48 && median <= 0.52 && std::abs(frac - 0.728) <= 0.01,
            fmt("median %.4f in [0.48, 0.52], P(0.25<t<0.75) %.4f (0.728 ± 0.01), %d draws", median,
                frac, kDraws)};
}

// --- 9 ---------------------------------------------------------------------------

// Recorded oracle run of this recipe: step-0 loss 1.73, mean of the last 100
// losses 0.096; 1000 samples with mean (-0.015, -0.009) and std
// (0.095, 0.100) against the data's (0, 0) and 0.1.
Result gaussian_end_to_end() {
    constexpr std::size_t kSteps = 3000, kSamples = 1000;
    constexpr double kLossRatio = 0.5, kMeanTol = 0.05, kStdRel = 0.25, kBudget = 600;
    const auto start = std::chrono::steady_clock::now();

    FlagDiTConfig mc = FlagDiTConfig::preset("tiny");
    mc.patch = 1;
    mc.channels = 2;
    mc.train_height = 1;
    mc.train_width = 1;
    mc.seed = 1;
    FlagDiT model(mc);
    const auto data = mixture_examples(make_2d_mixture(4096, 1, 0.0, 7));
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.steps = kSteps;
    tc.batch = 16;
    tc.seed = 3;
    tc.log_every = 500;
    const TrainResult r = train_loop(model, data, tc);
    double tail = 0;
    for (std::size_t i = kSteps - 100; i < kSteps; ++i) tail += r.losses[i];
    tail /= 100;
    const double first = r.losses.front();

    SamplerConfig sc;
    sc.steps = 50;
    sc.shift = 1.0;
    sc.cfg_scale = 1.0;
    Rng rng(11);
    const std::vector<std::size_t> prompt{1};
    const SequenceLayout layout{1, 1, 1, 1};
    double mx = 0, my = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < kSamples; ++i) {
        const LatentFrameGrid g = euler_solve(model, layout, prompt, sc, rng);
        const double a = g.at(0, 0, 0, 0), b = g.at(0, 0, 0, 1);
        mx += a;
        my += b;
        sx += a * a;
        sy += b * b;
    }
    mx /= kSamples;
    my /= kSamples;
    const double stdx = std::sqrt(sx / kSamples - mx * mx), stdy = std::sqrt(sy / kSamples - my * my);
    const double secs = seconds_since(start);
    const bool loss_ok = tail < kLossRatio * first;
    const bool mean_ok = std::abs(mx) <= kMeanTol && std::abs(my) <= kMeanTol;
    const bool std_ok = std::abs(stdx / kMixtureSigma - 1) <= kStdRel &&
                        std::abs(stdy / kMixtureSigma - 1) <= kStdRel;
    return {loss_ok && mean_ok && std_ok && secs < kBudget,
            fmt("loss %.3f -> %.3f (< 0.5x), sample mean (%.3f, %.3f) (|.| <= %.2f), std (%.3f, %.3f) vs %.2f (±%.0f%%), %.0fs (< %.0fs)",
                first, tail, mx, my, kMeanTol, stdx, stdy, kMixtureSigma, kStdRel * 100, secs,
                kBudget)};
}

// --- 10 --------------------------------------------------------------------------

// Recorded oracle run of this recipe: 16x16 accuracy 0.808 (v-stripes 20/50
// is the weak class); 24x24 dominant-frequency match 0.20, below the floor.
Result pattern_generation(Result& extrapolation) {
    constexpr std::size_t kPerClass = 50, kExtrapPerClass = 20;
    constexpr double kAccuracy = 0.80, kFreqPass = 0.60, kFreqFloor = 0.40;
    const auto start = std::chrono::steady_clock::now();

    FlagDiTConfig mc = tiny(16, 16, 1);
    FlagDiT model(mc);
    const auto data = pattern_examples(64, 16, 16, 4, 2, 5);
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.steps = 2000;
    tc.batch = 16;
    tc.seed = 3;
    tc.log_every = 250;
    train_loop(model, data, tc);
    const double train_secs = seconds_since(start);

    SamplerConfig sc;
    sc.steps = 30;
    Rng rng(123);
    std::string per_class;
    std::size_t correct = 0, total = 0;
    for (PatternClass c : kPatternClasses) {
        const std::vector<std::size_t> prompt{std::size_t(c)};
        std::size_t ok = 0;
        for (std::size_t i = 0; i < kPerClass; ++i)
            ok += classify_pattern(extrapolate_sample(model, 16, 16, 1, prompt, sc, rng)) == c;
        per_class += fmt("%s%s %zu/%zu", per_class.empty() ? "" : ", ", to_string(c).c_str(), ok, kPerClass);
        correct += ok;
        total += kPerClass;
    }
    const double acc = double(correct) / double(total);

    std::size_t matched = 0, produced = 0;
    std::string per_class_f;
    for (PatternClass c : kPatternClasses) {
        const std::vector<std::size_t> prompt{std::size_t(c)};
        const auto ref = dominant_frequency(make_pattern_image(c, 24, 24, 4, 0, false));
        std::size_t ok = 0;
        for (std::size_t i = 0; i < kExtrapPerClass; ++i) {
            const LatentFrameGrid g = extrapolate_sample(model, 24, 24, 1, prompt, sc, rng);
            produced += g.height() == 24 && g.width() == 24;
            const auto f = dominant_frequency(g);
            const auto dy = std::abs(long(f.first) - long(ref.first)), dx = std::abs(long(f.second) - long(ref.second));
            ok += std::max(dy, dx) <= 1;
        }
        per_class_f += fmt("%s%s %zu/%zu", per_class_f.empty() ? "" : ", ", to_string(c).c_str(), ok, kExtrapPerClass);
        matched += ok;
    }
    const std::size_t n_extrap = kExtrapPerClass * std::size(kPatternClasses);
    const double frac = double(matched) / double(n_extrap);
    const bool complete = produced == n_extrap;
    extrapolation.pass = complete && frac >= kFreqFloor;
    extrapolation.warn = extrapolation.pass && frac < kFreqPass;
    extrapolation.detail = fmt("24x24: %zu/%zu completed, dominant frequency within one bin %.2f (pass >= %.2f, warn >= %.2f) [%s]",
                               produced, n_extrap, frac, kFreqPass, kFreqFloor, per_class_f.c_str());
    return {acc >= kAccuracy,
            fmt("16x16 CFG accuracy %.3f (>= %.2f) over %zu per class [%s], train %.0fs, total %.0fs", acc,
                kAccuracy, kPerClass, per_class.c_str(), train_secs, seconds_since(start))};
}

// --- 11 --------------------------------------------------------------------------

Result application_identities() {
    FlagDiT model(tiny(8, 8, 11));
    perturb(model, 12, 0.3);
    const SequenceLayout layout{8, 8, 1, 2};
    SamplerConfig sc;
    sc.steps = 6;
    sc.cfg_scale = 3.0;
    const std::vector<std::size_t> prompt{2, 7};

    Rng a(1), b(1);
    const auto composed = compose_sample(model, {{prompt, {0, 0, 4, 4}}}, layout, sc, a);
    const bool compose_ok = values(composed.values) == values(euler_solve(model, layout, prompt, sc, b).values);

    Rng c(2), d(2);
    const auto batch = style_batch_sample(model, {prompt, {3}, {4}}, layout, sc, c);
    const bool style_ok = values(batch[0].values) == values(euler_solve(model, layout, prompt, sc, d).values);

    Rng e(3), f(3), g(3);
    LatentFrameGrid input{gaussian_like({8, 8, 1, 1}, e)};
    for (auto& v : input.values.mutable_data()) v = v * 3 + 1;
    const bool edit_one = values(edit(model, EditRequest{input, prompt, 1.0, true}, sc, f).values) ==
                          values(channel_normalize(input).values);
    Rng h(4), k(4);
    const bool edit_zero = values(edit(model, EditRequest{input, prompt, 0.0, true}, sc, h).values) ==
                           values(euler_solve(model, layout, prompt, sc, k).values);

    // Every routed cross-attention row must put all of its mass on its own slice.
    const std::vector<RegionPrompt> regions{{{3, 4}, {0, 0, 2, 4}}, {{5, 6}, {2, 0, 4, 2}}, {{8}, {2, 2, 4, 4}}};
    const CompositionPlan plan = plan_composition(regions, layout);
    std::size_t events = 0, leaks = 0, rows = 0;
    AttentionProbe probe;
    probe.on_cross = [&](const AttentionEvent& ev) {
        if (!ev.routed) return;
        ++events;
        const std::size_t n = ev.probs->dim(1);
        for (std::size_t i = 0; i < ev.probs->dim(0); ++i) {
            const int grp = plan.routing.token_group[i];
            if (grp < 0) continue;
            ++rows;
            const auto [lo, hi] = plan.routing.groups[std::size_t(grp)];
            for (std::size_t j = 0; j < n; ++j)
                if ((j < lo || j >= hi) && ev.probs->data()[i * n + j] != 0) ++leaks;
        }
    };
    ForwardOptions base;
    base.probe = &probe;
    Rng m(5);
    compose_sample(model, regions, layout, sc, m, base);
    const std::size_t want_events = sc.steps * model.config().layers * model.config().heads;
    const bool isolated = leaks == 0 && events == want_events && rows > 0;

    return {compose_ok && style_ok && edit_one && edit_zero && isolated,
            fmt("compose==sample %s, style anchor==sample %s, edit(1)==normalized %s, edit(0)==sample %s, isolation %zu routed events/%zu steps, %zu leaking entries",
                compose_ok ? "bitwise" : "DIFFERS", style_ok ? "bitwise" : "DIFFERS",
                edit_one ? "bitwise" : "DIFFERS", edit_zero ? "bitwise" : "DIFFERS", events, sc.steps,
                leaks)};
}

// --- 12 --------------------------------------------------------------------------

Result persistence_determinism() {
    auto run = [] {
        FlagDiT model(tiny(8, 8, 21));
        TrainConfig tc;
        tc.steps = 20;
        tc.batch = 4;
        tc.lr = 1e-3;
        tc.seed = 22;
        tc.log_every = 5;
        tc.record_wallclock = false;
        const TrainResult r = train_loop(model, pattern_examples(4, 8, 8, 4, 2, 23), tc);
        SamplerConfig sc;
        sc.steps = 5;
        Rng rng(24);
        const auto sample = extrapolate_sample(model, 12, 12, 1, std::vector<std::size_t>{3}, sc, rng);
        return std::tuple{encode_checkpoint(model), loss_csv(r.log), encode_grid(sample), std::move(model)};
    };
    auto [ckpt_a, csv_a, grid_a, model_a] = run();
    auto [ckpt_b, csv_b, grid_b, model_b] = run();

    const FlagDiT loaded = decode_checkpoint(ckpt_a);
    Rng rng(25);
    const TokenSequence probe_seq = random_sequence(8, 8, 2, rng);
    const std::vector<std::size_t> prompt{2};
    const bool probe_ok = values(loaded.forward(probe_seq, 0.4, prompt)) ==
                          values(model_a.forward(probe_seq, 0.4, prompt));
    const bool resave = encode_checkpoint(loaded) == ckpt_a;
    return {probe_ok && resave && ckpt_a == ckpt_b && csv_a == csv_b && grid_a == grid_b,
            fmt("reload probe %s, save-load-save %s, same seed: checkpoint %s, CSV %s, sample %s",
                probe_ok ? "bitwise" : "DIFFERS", resave ? "identical" : "DIFFERS",
                ckpt_a == ckpt_b ? "identical" : "DIFFERS", csv_a == csv_b ? "identical" : "DIFFERS",
                grid_a == grid_b ? "identical" : "DIFFERS")};
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Result()> run;
    };
    Result extrapolation{false, "not run"};
    const std::vector<Criterion> criteria = {
        {1, "gradient correctness", gradient_check},
        {2, "rotary relative-position invariance", rope_invariance},
        {3, "zero-init neutrality", zero_init_neutrality},
        {4, "codec round trip", codec_roundtrip},
        {5, "schedule identities", schedule_identities},
        {6, "time shifting", time_shifting},
        {7, "NTK scaling", ntk_scaling},
        {8, "logit-normal sampler", lognorm_sampler},
        {9, "2-D flow matching end to end", gaussian_end_to_end},
        {10, "conditional pattern generation", [&] {
             Result r = pattern_generation(extrapolation);
             // Both halves belong to one criterion.
             r.pass = r.pass && extrapolation.pass;
             r.warn = extrapolation.warn;
             r.detail += "; " + extrapolation.detail;
             return r;
         }},
        {11, "application identities", application_identities},
        {12, "persistence and determinism", persistence_determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Result r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        failures += !r.pass;
        std::printf("%s  [%d] %s: %s%s (%.1fs)\n", r.pass ? "PASS" : "FAIL", c.id, c.name,
                    r.detail.c_str(), r.warn ? " [warn: below the 60% target]" : "",
                    seconds_since(start));
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
    return failures ? 1 : 0;
}
