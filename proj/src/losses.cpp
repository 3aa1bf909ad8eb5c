#include "gtasr/losses.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace gtasr {
GTASR_NS_BEGIN

namespace {

constexpr int kStageChannels[] = {8, 16, 32};

const PerceptualEncoder& require_encoder(const LossContext& ctx) {
    if (!ctx.encoder) throw std::invalid_argument("loss context has no perceptual encoder");
    return *ctx.encoder;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw TensorError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

/// Weighted batch mean with per-sample constant weights.
Tensor weighted_mean(const Tensor& per_sample, const std::vector<real>& weights) {
    return mean(mul(per_sample, Tensor::from_vector({static_cast<std::int64_t>(weights.size())}, weights)));
}

}  // namespace

// ---------------------------------------------------------------------------

PerceptualEncoder::PerceptualEncoder(std::uint64_t seed) : seed_(seed) {
    std::mt19937_64 rng(seed);
    int in_c = 1;
    for (int out_c : kStageChannels) {
        const auto bound = static_cast<real>(std::sqrt(6.0 / (in_c * 9.0)));
        weights_.push_back(Tensor::uniform({out_c, in_c, 3, 3}, -bound, bound, rng));
        biases_.push_back(Tensor::uniform({out_c}, real(-0.1), real(0.1), rng));
        in_c = out_c;
    }
}

std::vector<Tensor> PerceptualEncoder::features(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != 1) throw TensorError("perceptual encoder expects [N,1,H,W], got " + shape_str(x.shape()));
    std::vector<Tensor> out;
    Tensor h = x;
    for (std::size_t s = 0; s < weights_.size(); ++s) {
        h = silu(add_channel_bias(conv2d(h, weights_[s], 2, 1), biases_[s]));
        out.push_back(h);
    }
    return out;
}

// ---------------------------------------------------------------------------

Tensor charbonnier_per_sample(const Tensor& a, const Tensor& b, double eps) {
    require_same_shape(a, b, "charbonnier");
    return mean_per_sample(sqrt_eps(add_scalar(square(sub(a, b)), static_cast<real>(eps * eps))));
}

Tensor charbonnier(const Tensor& a, const Tensor& b, double eps) { return mean(charbonnier_per_sample(a, b, eps)); }

Tensor percep_per_sample(const Tensor& a, const Tensor& b, const PerceptualEncoder& enc) {
    require_same_shape(a, b, "percep_lite");
    if (a.rank() != 4) throw TensorError("percep_lite expects NCHW input");
    const std::int64_t n = a.dim(0), c = a.dim(1);
    const Shape folded{n * c, 1, a.dim(2), a.dim(3)};
    const auto fa = enc.features(c == 1 ? a : reshape(a, folded));
    const auto fb = enc.features(c == 1 ? b : reshape(b, folded));
    Tensor total;
    for (std::size_t s = 0; s < fa.size(); ++s) {
        const Tensor diff = sub(channel_normalize(fa[s]), channel_normalize(fb[s]));
        const Tensor stage = mean_per_sample(square(diff));
        total = total.defined() ? add(total, stage) : stage;
    }
    if (c == 1) return total;
    return mean_per_sample(reshape(total, {n, c}));
}

Tensor percep_lite(const Tensor& a, const Tensor& b, const PerceptualEncoder& enc) {
    return mean(percep_per_sample(a, b, enc));
}

Tensor metric_per_sample(const Tensor& a, const Tensor& b, const MetricWeights& w, const PerceptualEncoder& enc,
                         double charbonnier_eps) {
    if (w.perceptual < 0 || w.charbonnier < 0 || (w.perceptual == 0 && w.charbonnier == 0)) {
        throw std::invalid_argument("metric weights must be non-negative and not both zero");
    }
    Tensor out;
    if (w.perceptual > 0) out = scale(percep_per_sample(a, b, enc), static_cast<real>(w.perceptual));
    if (w.charbonnier > 0) {
        const Tensor ch = scale(charbonnier_per_sample(a, b, charbonnier_eps), static_cast<real>(w.charbonnier));
        out = out.defined() ? add(out, ch) : ch;
    }
    return out;
}

Tensor metric(const Tensor& a, const Tensor& b, const MetricWeights& w, const PerceptualEncoder& enc,
              double charbonnier_eps) {
    return mean(metric_per_sample(a, b, w, enc, charbonnier_eps));
}

// ---------------------------------------------------------------------------

Tensor sobel_kernel() {
    return Tensor::from_vector({2, 1, 3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1,  // horizontal derivative
                                              -1, -2, -1, 0, 0, 0, 1, 2, 1});
}

Tensor sobel(const Tensor& x, const std::optional<Tensor>& kernel) {
    if (x.rank() != 4 || x.dim(1) != 1) throw TensorError("sobel expects a single-channel batch, got " + shape_str(x.shape()));
    static const Tensor fixed = sobel_kernel();
    return conv2d(x, kernel ? *kernel : fixed, 1, 1);
}

// ---------------------------------------------------------------------------

Tensor loss_ct_from_prediction(const Tensor& online_pred, const PredictorNet& reference, const Tensor& x0,
                               const Tensor& y0, int t, const Tensor& noise, const LossContext& ctx) {
    if (t < 1) throw std::invalid_argument("consistency loss needs t >= 1");
    const Tensor x_prev = forward_project(ctx.schedule, x0, y0, t - 1, noise);
    const Tensor target = predict_frozen(reference, x_prev, y0, t - 1, ctx.schedule.total_steps);
    return metric(online_pred, target, ctx.d1, require_encoder(ctx), ctx.charbonnier_eps);
}

Tensor loss_ct(const NetworkTriplet& nets, const Tensor& x0, const Tensor& y0, int t, const Tensor& noise,
               const LossContext& ctx) {
    if (t < 1) throw std::invalid_argument("consistency loss needs t >= 1");
    const Tensor x_t = forward_project(ctx.schedule, x0, y0, t, noise);
    const Tensor pred = nets.online.predict(x_t, y0, t, ctx.schedule.total_steps);
    return loss_ct_from_prediction(pred, nets.reference, x0, y0, t, noise, ctx);
}

Tensor loss_tp(const PredictorNet& net, const Tensor& x0, const Tensor& y0, int t, const Tensor& noise,
               const LossContext& ctx) {
    const Tensor x_t = forward_project(ctx.schedule, x0, y0, t, noise);
    const Tensor pred = net.predict(x_t, y0, t, ctx.schedule.total_steps);
    return metric(pred, x0, ctx.d1, require_encoder(ctx), ctx.charbonnier_eps);
}

Tensor loss_ta_from_prediction(const Tensor& x0_hat, const Tensor& x0, const Tensor& y0,
                               std::span<const Tensor> step_noise, const LossContext& ctx) {
    const int steps = ctx.schedule.total_steps;
    if (static_cast<int>(step_noise.size()) != steps) {
        throw std::invalid_argument("trajectory alignment needs one noise draw per schedule step");
    }
    const auto& enc = require_encoder(ctx);
    Tensor total;
    for (int s = 1; s <= steps; ++s) {
        const Tensor& eps = step_noise[static_cast<std::size_t>(s - 1)];
        const Tensor fake = forward_project(ctx.schedule, x0_hat, y0, s, eps);
        const Tensor real_state = forward_project(ctx.schedule, x0, y0, s, eps);
        const Tensor term = metric(fake, real_state, ctx.d1, enc, ctx.charbonnier_eps);
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

Tensor loss_ta(const PredictorNet& net, const Tensor& x0, const Tensor& y0, int t, const Tensor& noise,
               std::span<const Tensor> step_noise, const LossContext& ctx) {
    const Tensor x_t = forward_project(ctx.schedule, x0, y0, t, noise);
    const Tensor pred = net.predict(x_t, y0, t, ctx.schedule.total_steps);
    return loss_ta_from_prediction(pred, x0, y0, step_noise, ctx);
}

// ---------------------------------------------------------------------------

TargetEndpoints target_endpoints(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0,
                                 int t_prime, const Tensor& noise, const NoiseSchedule& schedule) {
    if (t_prime < 1 || t_prime > schedule.total_steps) throw std::out_of_range("t' outside [1, T]");
    const Tensor fake_state = forward_project(schedule, stop_gradient(x0_hat), y0, t_prime, noise);
    const Tensor real_state = forward_project(schedule, x0, y0, t_prime, noise);
    return {predict_frozen(target, fake_state, y0, t_prime, schedule.total_steps),
            predict_frozen(target, real_state, y0, t_prime, schedule.total_steps)};
}

Tensor delta_dtm(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0, int t_prime,
                 const Tensor& noise, const NoiseSchedule& schedule) {
    const auto ends = target_endpoints(target, x0_hat, x0, y0, t_prime, noise, schedule);
    return sub(ends.fake, ends.real_state);
}

Tensor delta_stab(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0, int t_prime,
                  const Tensor& noise, const NoiseSchedule& schedule) {
    const auto ends = target_endpoints(target, x0_hat, x0, y0, t_prime, noise, schedule);
    return sub(sobel(ends.fake), sobel(ends.real_state));
}

std::vector<real> omega(const Tensor& x0_hat, const Tensor& x0, double eps) {
    require_same_shape(x0_hat, x0, "omega");
    const std::int64_t n = x0.dim(0);
    const std::int64_t per = x0.numel() / n;  // C * S
    const auto a = x0_hat.data();
    const auto b = x0.data();
    std::vector<real> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        double l1 = 0.0;
        for (std::int64_t k = 0; k < per; ++k) l1 += std::abs(static_cast<double>(a[i * per + k]) - b[i * per + k]);
        out[static_cast<std::size_t>(i)] = static_cast<real>(static_cast<double>(per) / (l1 + eps));
    }
    return out;
}

Tensor loss_dtm_from_delta(const Tensor& x0_hat, const Tensor& x0, const Tensor& delta, const LossContext& ctx) {
    const Tensor anchor = stop_gradient(sub(x0_hat, delta));
    const Tensor per = metric_per_sample(x0_hat, anchor, ctx.d2, require_encoder(ctx), ctx.charbonnier_eps);
    return weighted_mean(per, omega(x0_hat, x0, ctx.omega_eps));
}

Tensor loss_stab_from_delta(const Tensor& x0_hat, const Tensor& x0, const Tensor& delta_sobel, const LossContext& ctx) {
    const auto& enc = require_encoder(ctx);
    Tensor per;
    if (ctx.stab_mode == StabChannelMode::Average) {
        const Tensor anchor = stop_gradient(sub(x0_hat, channel_mean(delta_sobel)));
        per = metric_per_sample(x0_hat, anchor, ctx.d2, enc, ctx.charbonnier_eps);
    } else {
        std::vector<Tensor> copies(static_cast<std::size_t>(delta_sobel.dim(1)), x0_hat);
        const Tensor widened = concat_channels(copies);
        const Tensor anchor = stop_gradient(sub(widened, delta_sobel));
        per = metric_per_sample(widened, anchor, ctx.d2, enc, ctx.charbonnier_eps);
    }
    return weighted_mean(per, omega(x0_hat, x0, ctx.omega_eps));
}

Tensor loss_dtm(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0, int t_prime,
                const Tensor& noise, const LossContext& ctx) {
    return loss_dtm_from_delta(x0_hat, x0, delta_dtm(target, x0_hat, x0, y0, t_prime, noise, ctx.schedule), ctx);
}

Tensor loss_stab(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0, int t_prime,
                 const Tensor& noise, const LossContext& ctx) {
    return loss_stab_from_delta(x0_hat, x0, delta_stab(target, x0_hat, x0, y0, t_prime, noise, ctx.schedule), ctx);
}

Tensor loss_rect(const PredictorNet& online, const Tensor& x0, const Tensor& y0, int t_prime, const Tensor& noise,
                 const LossContext& ctx) {
    const Tensor x_tp = forward_project(ctx.schedule, x0, y0, t_prime, noise);
    const Tensor pred = online.predict(x_tp, y0, t_prime, ctx.schedule.total_steps);
    return metric(sobel(pred), sobel(x0), ctx.d2, require_encoder(ctx), ctx.charbonnier_eps);
}

// ---------------------------------------------------------------------------

Tensor stage_total(const LossComponents& parts, int stage, const LossWeights& w) {
    auto need = [](const std::optional<Tensor>& t, const char* name) -> const Tensor& {
        if (!t || !t->defined()) throw std::invalid_argument(std::string("missing loss component ") + name);
        return *t;
    };
    if (stage == 1) {
        return add(need(parts.ct, "ct"), scale(need(parts.ta, "ta"), static_cast<real>(w.ta)));
    }
    if (stage == 2) {
        Tensor total = need(parts.ct, "ct");
        total = add(total, scale(need(parts.dtm, "dtm"), static_cast<real>(w.dtm)));
        total = add(total, scale(need(parts.stab, "stab"), static_cast<real>(w.stab)));
        total = add(total, scale(need(parts.rect, "rect"), static_cast<real>(w.rect)));
        return total;
    }
    throw std::invalid_argument("stage must be 1 or 2");
}

GTASR_NS_END
}  // namespace gtasr
