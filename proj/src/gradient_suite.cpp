#include "gtasr/gradient_suite.hpp"

#include <random>

#include "gtasr/gradcheck.hpp"
#include "gtasr/losses.hpp"
#include "gtasr/model.hpp"

namespace gtasr {
GTASR_NS_BEGIN

namespace {

struct Instance {
    Tensor x0, y0, noise, noise_prime;
    std::vector<Tensor> step_noise;
};

Instance make_instance(const GradSuiteOptions& opts, int steps, std::mt19937_64& rng) {
    const Shape s{1, 1, opts.image_size, opts.image_size};
    Instance in;
    in.x0 = Tensor::uniform(s, real(0), real(1), rng);
    // y0: a perturbed copy of x0 so the residual is small but non-zero.
    Tensor pert = Tensor::randn(s, rng);
    in.y0 = add(in.x0, scale(pert, real(0.1)));
    in.noise = Tensor::randn(s, rng);
    in.noise_prime = Tensor::randn(s, rng);
    for (int k = 0; k < steps; ++k) in.step_noise.push_back(Tensor::randn(s, rng));
    return in;
}

GradSuiteEntry entry(const std::string& name, const GradCheckResult& r, double tol) {
    return {name, r.max_rel_error, r.coords_checked, r.max_rel_error < tol};
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts) {
    std::mt19937_64 rng(opts.seed);
    std::vector<GradSuiteEntry> out;
    const double h = opts.step;
    const double tol = opts.tolerance;

    // --- op level -----------------------------------------------------------
    {
        const Tensor x = Tensor::randn({1, 2, 5, 5}, rng);
        const Tensor k = Tensor::randn({3, 2, 3, 3}, rng);
        out.push_back(entry("conv2d/input",
                            finite_difference_check([&](const Tensor& v) { return sum(conv2d(v, k, 1, 0)); }, x, h), tol));
        out.push_back(entry("conv2d/kernel",
                            finite_difference_check([&](const Tensor& v) { return sum(square(conv2d(x, v, 2, 1))); }, k, h),
                            tol));
    }
    {
        const Tensor x = Tensor::randn({2, 3, 4, 4}, rng);
        const Tensor w = Tensor::randn({2, 3, 4, 4}, rng);
        out.push_back(entry("channel_normalize",
                            finite_difference_check([&](const Tensor& v) { return sum(mul(channel_normalize(v), w)); }, x, h),
                            tol));
        out.push_back(entry("silu+upsample+channel_mean",
                            finite_difference_check(
                                [&](const Tensor& v) { return mean(square(channel_mean(upsample_nearest(silu(v), 2)))); },
                                x, h),
                            tol));
    }
    {
        const Tensor x = Tensor::randn({2, 1, 6, 6}, rng);
        const Tensor zero = Tensor::zeros(x.shape());
        out.push_back(
            entry("charbonnier", finite_difference_check([&](const Tensor& v) { return charbonnier(v, zero); }, x, h), tol));
    }

    // --- network and losses -------------------------------------------------
    const NoiseSchedule schedule(5, 2.5);
    const PerceptualEncoder enc(opts.seed + 7);
    LossContext ctx;
    ctx.schedule = schedule;
    ctx.encoder = &enc;

    NetworkTriplet nets(ModelConfig{1, opts.model_width}, opts.seed + 11);
    // Give the frozen copies distinct values so the checks cannot pass by symmetry.
    NetworkTriplet other(ModelConfig{1, opts.model_width}, opts.seed + 12);
    nets.reference.copy_values_from(other.online);
    nets.target.copy_values_from(other.online);

    const auto params = nets.online.parameters();
    const int T = schedule.total_steps;
    const Instance in = make_instance(opts, T, rng);
    const int t = 3;
    const int t_prime = 2;
    const auto mc = opts.max_coords_per_tensor;

    const Tensor x_t = forward_project(schedule, in.x0, in.y0, t, in.noise);
    auto online_pred = [&] { return nets.online.predict(x_t, in.y0, t, T); };

    out.push_back(entry("predict",
                        finite_difference_check_params([&] { return mean(square(online_pred())); }, params, h, mc), tol));
    out.push_back(entry("L_CT",
                        finite_difference_check_params(
                            [&] { return loss_ct(nets, in.x0, in.y0, t, in.noise, ctx); }, params, h, mc),
                        tol));
    out.push_back(entry("L_TP",
                        finite_difference_check_params(
                            [&] { return loss_tp(nets.online, in.x0, in.y0, t, in.noise, ctx); }, params, h, mc),
                        tol));
    out.push_back(entry("L_TA",
                        finite_difference_check_params(
                            [&] { return loss_ta(nets.online, in.x0, in.y0, t, in.noise, in.step_noise, ctx); }, params,
                            h, mc),
                        tol));

    // DTM / Stab: the anchor sg(x0_hat - delta) and omega are frozen at the unperturbed point.
    const Tensor base_pred = stop_gradient(online_pred());
    const auto w = omega(base_pred, in.x0, ctx.omega_eps);
    const Tensor w_t = Tensor::from_vector({static_cast<std::int64_t>(w.size())}, w);
    {
        const Tensor anchor =
            sub(base_pred, delta_dtm(nets.target, base_pred, in.x0, in.y0, t_prime, in.noise_prime, schedule));
        auto oracle = [&] { return mean(mul(metric_per_sample(online_pred(), anchor, ctx.d2, enc), w_t)); };
        out.push_back(entry("L_DTM",
                            finite_difference_check_params(
                                [&] {
                                    return loss_dtm(nets.target, online_pred(), in.x0, in.y0, t_prime, in.noise_prime,
                                                    ctx);
                                },
                                oracle, params, h, mc),
                            tol));
    }
    for (auto mode : {StabChannelMode::Average, StabChannelMode::Duplicate}) {
        LossContext mctx = ctx;
        mctx.stab_mode = mode;
        const Tensor ds = delta_stab(nets.target, base_pred, in.x0, in.y0, t_prime, in.noise_prime, schedule);
        std::function<Tensor()> oracle;
        if (mode == StabChannelMode::Average) {
            const Tensor anchor = sub(base_pred, channel_mean(ds));
            oracle = [&, anchor] { return mean(mul(metric_per_sample(online_pred(), anchor, ctx.d2, enc), w_t)); };
        } else {
            const Tensor anchor = sub(concat_channels({base_pred, base_pred}), ds);
            oracle = [&, anchor] {
                const Tensor p = online_pred();
                return mean(mul(metric_per_sample(concat_channels({p, p}), anchor, ctx.d2, enc), w_t));
            };
        }
        out.push_back(entry(mode == StabChannelMode::Average ? "L_Stab" : "L_Stab/duplicate",
                            finite_difference_check_params(
                                [&] {
                                    return loss_stab(nets.target, online_pred(), in.x0, in.y0, t_prime,
                                                     in.noise_prime, mctx);
                                },
                                oracle, params, h, mc),
                            tol));
    }
    out.push_back(entry("L_Rect",
                        finite_difference_check_params(
                            [&] { return loss_rect(nets.online, in.x0, in.y0, t_prime, in.noise_prime, ctx); }, params, h,
                            mc),
                        tol));
    return out;
}

GTASR_NS_END
}  // namespace gtasr
