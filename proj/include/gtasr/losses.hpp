#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gtasr/model.hpp"
#include "gtasr/schedule.hpp"
#include "gtasr/tensor.hpp"

namespace gtasr {
GTASR_NS_BEGIN

/// d(a, b) = perceptual * percep_lite(a, b) + charbonnier * Charbonnier(a, b)
struct MetricWeights {
    double perceptual = 0.5;
    double charbonnier = 0.5;

    static MetricWeights stage_one() { return {0.5, 0.5}; }
    static MetricWeights stage_two() { return {1.0, 0.0}; }
};

/// Frozen three-stage random-convolution feature extractor (8 -> 16 -> 32 channels,
/// stride 2 per stage, SiLU). Stands in for a pretrained perceptual network.
class PerceptualEncoder {
public:
    explicit PerceptualEncoder(std::uint64_t seed = 1234);

    std::vector<Tensor> features(const Tensor& x) const;
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

/// How the two-channel Sobel discrepancy is brought back to image space in the stability loss.
enum class StabChannelMode { Average, Duplicate };

struct LossContext {
    NoiseSchedule schedule;
    const PerceptualEncoder* encoder = nullptr;
    MetricWeights d1 = MetricWeights::stage_one();
    MetricWeights d2 = MetricWeights::stage_two();
    double charbonnier_eps = 1e-3;
    double omega_eps = 1e-8;
    StabChannelMode stab_mode = StabChannelMode::Average;
};

// ---------------------------------------------------------------------------
// Distances. *_per_sample variants return shape [N].

Tensor charbonnier_per_sample(const Tensor& a, const Tensor& b, double eps = 1e-3);
Tensor charbonnier(const Tensor& a, const Tensor& b, double eps = 1e-3);

/// Sum over encoder stages of the mean squared difference of channel-normalised
/// features. Multi-channel inputs are scored channel by channel and averaged.
Tensor percep_per_sample(const Tensor& a, const Tensor& b, const PerceptualEncoder& enc);
Tensor percep_lite(const Tensor& a, const Tensor& b, const PerceptualEncoder& enc);

Tensor metric_per_sample(const Tensor& a, const Tensor& b, const MetricWeights& w, const PerceptualEncoder& enc,
                         double charbonnier_eps = 1e-3);
Tensor metric(const Tensor& a, const Tensor& b, const MetricWeights& w, const PerceptualEncoder& enc,
              double charbonnier_eps = 1e-3);

// ---------------------------------------------------------------------------
// Sobel

/// The standard 3x3 horizontal/vertical Sobel pair as a [2,1,3,3] kernel.
Tensor sobel_kernel();
/// Two-channel gradient map of a single-channel batch (zero padding 1). A custom
/// kernel may be supplied for testing.
Tensor sobel(const Tensor& x, const std::optional<Tensor>& kernel = std::nullopt);

// ---------------------------------------------------------------------------
// Stage I

/// Consistency loss given the online prediction at step t; the reference branch
/// is evaluated at t-1 with the same noise and enters as a constant.
Tensor loss_ct_from_prediction(const Tensor& online_pred, const PredictorNet& reference, const Tensor& x0,
                               const Tensor& y0, int t, const Tensor& noise, const LossContext& ctx);
Tensor loss_ct(const NetworkTriplet& nets, const Tensor& x0, const Tensor& y0, int t, const Tensor& noise,
               const LossContext& ctx);

Tensor loss_tp(const PredictorNet& net, const Tensor& x0, const Tensor& y0, int t, const Tensor& noise,
               const LossContext& ctx);

/// Sum over s = 1..T of d_I(Q(x0_hat, s, eps_s), Q(x0, s, eps_s)); step_noise[s-1] is eps_s.
Tensor loss_ta_from_prediction(const Tensor& x0_hat, const Tensor& x0, const Tensor& y0,
                               std::span<const Tensor> step_noise, const LossContext& ctx);
Tensor loss_ta(const PredictorNet& net, const Tensor& x0, const Tensor& y0, int t, const Tensor& noise,
               std::span<const Tensor> step_noise, const LossContext& ctx);

// ---------------------------------------------------------------------------
// Stage II

/// Frozen-target predictions from the re-noised fake state Q(x0_hat, t') and the real state Q(x0, t').
struct TargetEndpoints {
    Tensor fake;
    Tensor real_state;
};

TargetEndpoints target_endpoints(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0,
                                 int t_prime, const Tensor& noise, const NoiseSchedule& schedule);

Tensor delta_dtm(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0, int t_prime,
                 const Tensor& noise, const NoiseSchedule& schedule);
Tensor delta_stab(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0, int t_prime,
                  const Tensor& noise, const NoiseSchedule& schedule);

/// Per-sample C*S / (||x0_hat - x0||_1 + eps); detached.
std::vector<real> omega(const Tensor& x0_hat, const Tensor& x0, double eps = 1e-8);

Tensor loss_dtm_from_delta(const Tensor& x0_hat, const Tensor& x0, const Tensor& delta, const LossContext& ctx);
Tensor loss_stab_from_delta(const Tensor& x0_hat, const Tensor& x0, const Tensor& delta_sobel, const LossContext& ctx);

Tensor loss_dtm(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0, int t_prime,
                const Tensor& noise, const LossContext& ctx);
Tensor loss_stab(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0, int t_prime,
                 const Tensor& noise, const LossContext& ctx);
Tensor loss_rect(const PredictorNet& online, const Tensor& x0, const Tensor& y0, int t_prime, const Tensor& noise,
                 const LossContext& ctx);

// ---------------------------------------------------------------------------
// Totals

struct LossWeights {
    double ta = 0.5;
    double dtm = 1.6;
    double stab = 0.032;
    double rect = 1.0;
};

struct LossComponents {
    std::optional<Tensor> ct;
    std::optional<Tensor> ta;
    std::optional<Tensor> dtm;
    std::optional<Tensor> stab;
    std::optional<Tensor> rect;
};

/// Stage 1: ct + w.ta * ta. Stage 2: ct + w.dtm * dtm + w.stab * stab + w.rect * rect.
Tensor stage_total(const LossComponents& parts, int stage, const LossWeights& w);

GTASR_NS_END
}  // namespace gtasr
