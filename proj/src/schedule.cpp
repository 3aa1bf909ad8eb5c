#include "gtasr/schedule.hpp"

#include <cmath>
#include <string>

namespace gtasr {
GTASR_NS_BEGIN

NoiseSchedule::NoiseSchedule(int steps, double n) : total_steps(steps), exponent(n) {
    if (steps < 1) throw std::invalid_argument("schedule needs T >= 1");
    if (!(n > 0.0)) throw std::invalid_argument("schedule exponent must be positive");
}

double coeff(const NoiseSchedule& s, int t) {
    if (t < 0 || t > s.total_steps) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " + std::to_string(s.total_steps) +
                                "]");
    }
    if (t == 0) return 0.0;
    if (t == s.total_steps) return 1.0;
    return std::pow(static_cast<double>(t) / s.total_steps, s.exponent);
}

Tensor forward_project(const NoiseSchedule& s, const Tensor& x0, const Tensor& y0, int t, const Tensor& noise) {
    if (x0.shape() != y0.shape() || x0.shape() != noise.shape()) {
        throw TensorError("forward_project: shape mismatch " + shape_str(x0.shape()) + ", " + shape_str(y0.shape()) +
                          ", " + shape_str(noise.shape()));
    }
    const real c = static_cast<real>(coeff(s, t));
    if (t == 0) return x0;
    // x0 + c (y0 - x0) + c noise, written so the x0 term carries weight (1 - c) exactly.
    return add(scale(x0, real(1) - c), scale(add(y0, noise), c));
}

double drift_residual(const std::function<double(double)>& alpha, const std::function<double(double)>& sigma,
                      double t, double h) {
    const double sig = sigma(t);
    if (sig == 0.0) throw std::domain_error("drift_residual: sigma vanishes at t");
    const double d_alpha = (alpha(t + h) - alpha(t - h)) / (2.0 * h);
    const double d_sigma = (sigma(t + h) - sigma(t - h)) / (2.0 * h);
    return d_alpha - d_sigma * alpha(t) / sig;
}

GTASR_NS_END
}  // namespace gtasr
