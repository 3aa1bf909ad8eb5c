#pragma once

#include <cstdint>
#include <functional>

#include "gtasr/schedule.hpp"
#include "gtasr/tensor.hpp"

namespace gtasr {
GTASR_NS_BEGIN

/// Any clean-image predictor f(x_t, y0, t). Used so the samplers can run either a
/// trained network or an analytic oracle.
using Predictor = std::function<Tensor(const Tensor& x_t, const Tensor& y0, int t)>;

struct SamplerConfig {
    int steps = 1;
    NoiseSchedule schedule;
};

/// Probability-flow velocity (n/t)(x_t - f) for a model prediction f.
Tensor velocity_predict(const Tensor& x_t, const Tensor& f_pred, double t, double n);
/// Same field driven by the true clean image.
Tensor velocity_ideal(const Tensor& x_t, const Tensor& x0, double t, double n);

/// Exact solution of dx/ds = (n/s)(x - f) from s = t down to s = t_prev with f held fixed:
/// f + (t_prev/t)^n (x_t - f). Returns f itself at t_prev = 0.
Tensor step_exact(const Tensor& x_t, const Tensor& f_pred, int t, int t_prev, double n);

/// Decreasing integer grid T = g_0 > g_1 > ... > g_steps = 0, as uniform as integer steps allow.
std::vector<int> sampler_grid(int total_steps, int steps);

/// Draws the terminal state y0 + eps with eps ~ N(0, I) from `seed`.
Tensor initial_state(const Tensor& y0, std::uint64_t seed);

Tensor sample_multistep(const Predictor& f, const Tensor& y0, const SamplerConfig& cfg, std::uint64_t seed);
Tensor sample_onestep(const Predictor& f, const Tensor& y0, const NoiseSchedule& schedule, std::uint64_t seed);

GTASR_NS_END
}  // namespace gtasr
