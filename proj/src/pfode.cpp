#include "gtasr/pfode.hpp"

#include <cmath>
#include <random>
#include <string>

namespace gtasr {
GTASR_NS_BEGIN

Tensor velocity_predict(const Tensor& x_t, const Tensor& f_pred, double t, double n) {
    if (!(t > 0.0)) throw std::domain_error("velocity is singular at t = 0");
    return scale(sub(x_t, f_pred), static_cast<real>(n / t));
}

Tensor velocity_ideal(const Tensor& x_t, const Tensor& x0, double t, double n) { return velocity_predict(x_t, x0, t, n); }

Tensor step_exact(const Tensor& x_t, const Tensor& f_pred, int t, int t_prev, double n) {
    if (t_prev < 0 || t_prev >= t) {
        throw std::invalid_argument("step_exact needs 0 <= t_prev < t (got t=" + std::to_string(t) +
                                    ", t_prev=" + std::to_string(t_prev) + ")");
    }
    if (t_prev == 0) return f_pred;
    const real ratio = static_cast<real>(std::pow(static_cast<double>(t_prev) / t, n));
    return add(f_pred, scale(sub(x_t, f_pred), ratio));
}

std::vector<int> sampler_grid(int total_steps, int steps) {
    if (steps < 1 || steps > total_steps) {
        throw std::invalid_argument("sampler steps must be in [1, " + std::to_string(total_steps) + "]");
    }
    std::vector<int> grid;
    grid.reserve(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) {
        const double pos = static_cast<double>(total_steps) * (steps - k) / steps;
        grid.push_back(static_cast<int>(std::lround(pos)));
    }
    return grid;
}

Tensor initial_state(const Tensor& y0, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return add(y0, Tensor::randn(y0.shape(), rng));
}

Tensor sample_multistep(const Predictor& f, const Tensor& y0, const SamplerConfig& cfg, std::uint64_t seed) {
    const auto grid = sampler_grid(cfg.schedule.total_steps, cfg.steps);
    Tensor x = initial_state(y0, seed);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const Tensor pred = stop_gradient(f(x, y0, grid[k]));
        x = step_exact(x, pred, grid[k], grid[k + 1], cfg.schedule.exponent);
    }
    return x;
}

Tensor sample_onestep(const Predictor& f, const Tensor& y0, const NoiseSchedule& schedule, std::uint64_t seed) {
    return stop_gradient(f(initial_state(y0, seed), y0, schedule.total_steps));
}

GTASR_NS_END
}  // namespace gtasr
