#include "gtasr/verify.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <sstream>

#include "gtasr/analysis.hpp"
#include "gtasr/gradient_suite.hpp"
#include "gtasr/losses.hpp"
#include "gtasr/train.hpp"

namespace gtasr {

namespace {

std::string fmt(double v) {
    std::ostringstream o;
    o.precision(3);
    o << std::scientific << v;
    return o.str();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a.at(i)) - b.at(i)));
    return m;
}

Tensor sobel_kernel_for(bool corrupt) {
    Tensor k = sobel_kernel().clone();
    if (corrupt) k.mutable_data()[3] = real(-3);  // Kx middle row becomes [-3, 0, 2]
    return k;
}

VerifyEntry check_drift_grid() {
    double worst = 0.0;
    const double T = 5.0;
    for (double n : {1.0, 2.5}) {
        auto f = [&](double t) { return std::pow(t / T, n); };
        for (int k = 1; k <= 50; ++k) worst = std::max(worst, std::abs(drift_residual(f, f, T * k / 51.0)));
    }
    return {"drift_residual_grid", worst < 1e-9, "max |residual| over 50 t x n in {1, 2.5} = " + fmt(worst)};
}

VerifyEntry check_drift_mismatch() {
    const double T = 5.0;
    const double r = drift_residual([&](double t) { return (t / T) * (t / T); }, [&](double t) { return t / T; }, 0.5 * T);
    const double err = std::abs(r - 0.5 / T);
    return {"drift_residual_mismatched", err < 1e-6 && r != 0.0,
            "residual " + fmt(r) + " vs hand value 0.5/T = " + fmt(0.5 / T)};
}

VerifyEntry check_projection(std::mt19937_64& rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const NoiseSchedule s(5, trial % 2 ? 1.0 : 2.5);
        const int t = static_cast<int>(std::uniform_int_distribution<int>(0, 5)(rng));
        const Tensor a = Tensor::uniform({2, 1, 8, 8}, 0, 1, rng), b = Tensor::uniform({2, 1, 8, 8}, 0, 1, rng);
        const Tensor y0 = Tensor::uniform({2, 1, 8, 8}, 0, 1, rng), eps = Tensor::randn({2, 1, 8, 8}, rng);
        const Tensor lhs = sub(forward_project(s, a, y0, t, eps), forward_project(s, b, y0, t, eps));
        const Tensor rhs = scale(sub(a, b), 1.0 - coeff(s, t));
        worst = std::max(worst, max_abs_diff(lhs, rhs));
    }
    return {"projection_difference_identity", worst < 1e-6, "max deviation " + fmt(worst)};
}

VerifyEntry check_ta_pixel_component(std::mt19937_64& rng) {
    double worst = 0.0;
    const NoiseSchedule s(5, 2.5);
    const Tensor x0 = Tensor::uniform({2, 1, 8, 8}, 0, 1, rng), x0_hat = Tensor::uniform({2, 1, 8, 8}, 0, 1, rng);
    const Tensor y0 = Tensor::uniform({2, 1, 8, 8}, 0, 1, rng);
    for (int step = 1; step <= 5; ++step) {
        const Tensor eps = Tensor::randn({2, 1, 8, 8}, rng);
        const double shared = charbonnier(forward_project(s, x0_hat, y0, step, eps), forward_project(s, x0, y0, step, eps)).item();
        const double direct =
            charbonnier(scale(sub(x0_hat, x0), 1.0 - coeff(s, step)), Tensor::zeros(x0.shape())).item();
        worst = std::max(worst, std::abs(shared - direct));
    }
    return {"ta_pixel_component", worst < 1e-5, "max |Charbonnier(Q-Q) - Charbonnier((1-a)(x0_hat-x0))| " + fmt(worst)};
}

VerifyEntry check_sobel_linearity(std::mt19937_64& rng, const Tensor& kernel) {
    const Tensor u = Tensor::uniform({2, 1, 16, 16}, 0, 1, rng), v = Tensor::uniform({2, 1, 16, 16}, 0, 1, rng);
    const double a = 0.7, b = -0.4;
    const Tensor lhs = sobel(add(scale(u, a), scale(v, b)), kernel);
    const Tensor rhs = add(scale(sobel(u, kernel), a), scale(sobel(v, kernel), b));
    const double err = max_abs_diff(lhs, rhs);
    return {"sobel_linearity", err < 1e-6, "max deviation " + fmt(err)};
}

VerifyEntry check_sobel_ramp(const Tensor& kernel) {
    const int n = 8;
    std::vector<real> ramp(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) ramp[i * n + j] = static_cast<real>(j);
    const Tensor g = sobel(Tensor::from_vector({1, 1, n, n}, ramp), kernel);
    bool ok = true;
    double gx = 0, gy = 0;
    for (int i = 1; i < n - 1; ++i)
        for (int j = 1; j < n - 1; ++j) {
            gx = g.at(i * n + j);
            gy = g.at(n * n + i * n + j);
            ok = ok && gx == 8.0 && gy == 0.0;
        }
    return {"sobel_ramp_response", ok, "interior response (" + std::to_string(gx) + ", " + std::to_string(gy) + "), expected (8, 0)"};
}

VerifyEntry check_sobel_constant(const Tensor& kernel) {
    const int n = 8;
    const Tensor g = sobel(Tensor::full({1, 1, n, n}, real(0.37)), kernel);
    bool ok = true;
    for (int c = 0; c < 2; ++c)
        for (int i = 1; i < n - 1; ++i)
            for (int j = 1; j < n - 1; ++j) ok = ok && g.at(c * n * n + i * n + j) == 0.0;
    return {"sobel_constant_image", ok, ok ? "interior response exactly 0" : "nonzero interior response"};
}

VerifyEntry check_boundary(std::mt19937_64& rng, const Tensor& kernel) {
    const NoiseSchedule s(5, 2.5);
    const Tensor x0 = Tensor::uniform({2, 1, 8, 8}, 0, 1, rng), x0_hat = Tensor::randn({2, 1, 8, 8}, rng);
    const Tensor y0 = Tensor::uniform({2, 1, 8, 8}, 0, 1, rng), eps = Tensor::randn({2, 1, 8, 8}, rng);
    const Tensor d = sub(sobel(forward_project(s, x0_hat, y0, 5, eps), kernel), sobel(forward_project(s, x0, y0, 5, eps), kernel));
    bool ok = true;
    for (real v : d.data()) ok = ok && std::bit_cast<std::uint32_t>(static_cast<float>(v)) == 0u;
    return {"boundary_g_T_zero", ok, ok ? "S(x_hat_T) - S(x_T) is bitwise zero" : "nonzero difference at t = T"};
}

VerifyEntry check_triangle(std::uint64_t seed) {
    ModelConfig mc;
    const PredictorNet target(mc, seed + 1), online(mc, seed + 2);
    std::mt19937_64 rng(seed);
    const NoiseSchedule s(5, 1.0);
    double worst = 1e30;
    for (int i = 0; i < 100; ++i) {
        const Tensor x0 = Tensor::uniform({1, 1, 16, 16}, 0, 1, rng), y0 = Tensor::uniform({1, 1, 16, 16}, 0, 1, rng);
        const Tensor x0_hat = predict_frozen(online, add(y0, Tensor::randn(y0.shape(), rng)), y0, 5, 5);
        const int tp = std::uniform_int_distribution<int>(1, 5)(rng);
        worst = std::min(worst, triangle_slack(target, x0_hat, x0, y0, tp, Tensor::randn(y0.shape(), rng), s));
    }
    return {"triangle_decomposition", worst >= -1e-5, "min slack over 100 probes " + fmt(worst)};
}

VerifyEntry check_oracle_sampler(std::mt19937_64& rng) {
    double worst = 0.0;
    for (int inst = 0; inst < 10; ++inst) {
        const Tensor x0 = Tensor::uniform({1, 1, 8, 8}, 0, 1, rng), y0 = Tensor::uniform({1, 1, 8, 8}, 0, 1, rng);
        const Predictor oracle = [&](const Tensor&, const Tensor&, int) { return x0; };
        for (int steps : {1, 2, 4, 5}) {
            const Tensor out = sample_multistep(oracle, y0, SamplerConfig{steps, NoiseSchedule(5, 2.5)},
                                                static_cast<std::uint64_t>(inst * 10 + steps));
            worst = std::max(worst, max_abs_diff(out, x0));
        }
    }
    return {"oracle_sampler_exact", worst < 1e-5, "max |x_out - x0| over 10 instances x steps {1,2,4,5} = " + fmt(worst)};
}

VerifyEntry check_stop_gradient_partition(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.stage = 2;
    cfg.iterations_stage1 = 0;
    cfg.iterations_stage2 = 1;
    cfg.sync_period = 1;
    cfg.batch = 2;
    cfg.data.size = 16;
    cfg.val_count = 0;
    const TrainResult init = train_stage1([&] {
        TrainConfig c = cfg;
        c.stage = 1;
        return c;
    }());

    bool frozen_zero = true, online_live = false;
    TrainHooks hooks;
    hooks.on_event = [&](HookPoint p, std::int64_t, const NetworkTriplet& nets) {
        if (p != HookPoint::AfterBackward && p != HookPoint::AfterStep) return;
        for (const PredictorNet* net : {&nets.reference, &nets.target})
            for (const auto& [_, t] : net->named_parameters())
                for (real g : t.grad()) frozen_zero = frozen_zero && std::bit_cast<std::uint32_t>(static_cast<float>(g)) == 0u;
        if (p == HookPoint::AfterBackward)
            for (const auto& [_, t] : nets.online.named_parameters())
                for (real g : t.grad()) online_live = online_live || g != 0;
    };
    train_stage2(cfg, init.checkpoint, hooks);
    return {"stop_gradient_partition", frozen_zero && online_live,
            std::string("reference/target gradients ") + (frozen_zero ? "bitwise zero" : "NONZERO") +
                ", online gradients " + (online_live ? "nonzero" : "all zero")};
}

VerifyEntry check_omega(std::mt19937_64& rng) {
    const Tensor a = Tensor::uniform({3, 1, 8, 8}, 0, 1, rng), b = Tensor::uniform({3, 1, 8, 8}, 0, 1, rng);
    const auto w = omega(a, b);
    double worst = 0.0;
    for (std::int64_t n = 0; n < 3; ++n) {
        double l1 = 0.0;
        for (std::int64_t k = 0; k < 64; ++k) l1 += std::abs(static_cast<double>(a.at(n * 64 + k)) - b.at(n * 64 + k));
        worst = std::max(worst, std::abs(w[static_cast<std::size_t>(n)] * l1 - 64.0) / 64.0);
    }
    return {"omega_identity", worst < 1e-4, "max relative error of omega * ||x0_hat - x0||_1 vs C*S: " + fmt(worst)};
}

}  // namespace

bool VerifyReport::passed() const {
    for (const auto& e : entries)
        if (!e.pass) return false;
    return !entries.empty();
}

const VerifyEntry* VerifyReport::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

std::string VerifyReport::text() const {
    std::string out;
    int passed_count = 0;
    for (const auto& e : entries) {
        out += (e.pass ? "PASS " : "FAIL ") + e.name + ": " + e.detail + "\n";
        passed_count += e.pass;
    }
    out += std::to_string(passed_count) + "/" + std::to_string(entries.size()) + " checks passed\n";
    return out;
}

VerifyReport verify_math(const VerifyOptions& opts) {
    VerifyReport r;
    std::mt19937_64 rng(opts.seed);
    const Tensor kernel = sobel_kernel_for(opts.corrupt_sobel);
    r.entries.push_back(check_drift_grid());
    r.entries.push_back(check_drift_mismatch());
    r.entries.push_back(check_projection(rng));
    r.entries.push_back(check_ta_pixel_component(rng));
    r.entries.push_back(check_sobel_linearity(rng, kernel));
    r.entries.push_back(check_sobel_ramp(kernel));
    r.entries.push_back(check_sobel_constant(kernel));
    r.entries.push_back(check_boundary(rng, kernel));
    r.entries.push_back(check_triangle(opts.seed));
    r.entries.push_back(check_oracle_sampler(rng));
    r.entries.push_back(check_stop_gradient_partition(opts.seed));
    r.entries.push_back(check_omega(rng));
    if (opts.include_gradients) {
        GradSuiteOptions g;
        g.seed = opts.seed;
        g.step = 1e-5;
        for (const auto& e : f64::run_gradient_suite(g))
            r.entries.push_back({"gradient/" + e.name, e.pass,
                                 "max relative error " + fmt(e.max_rel_error) + " over " + std::to_string(e.coords) +
                                     " coordinates (float64 oracle)"});
    }
    return r;
}

}  // namespace gtasr
