#pragma once

#include <functional>

#include "gtasr/tensor.hpp"

namespace gtasr {
GTASR_NS_BEGIN

/// Residual-shifting power schedule: the residual weight and the noise scale
/// both equal (t/T)^n, so coeff(0) = 0 and coeff(T) = 1.
struct NoiseSchedule {
    int total_steps = 5;  // T
    double exponent = 2.5;  // n

    NoiseSchedule() = default;
    NoiseSchedule(int steps, double n);
};

/// (t/T)^n for integer 0 <= t <= T.
double coeff(const NoiseSchedule& s, int t);

/// x0 + c_t (y0 - x0) + c_t * noise, with c_t = coeff(s, t).
/// `noise` is supplied by the caller so several projections can share one draw.
Tensor forward_project(const NoiseSchedule& s, const Tensor& x0, const Tensor& y0, int t, const Tensor& noise);

/// Drift coefficient of the residual prior, d(alpha)/dt - d(sigma)/dt * alpha / sigma,
/// evaluated with central differences of step h at continuous time t.
double drift_residual(const std::function<double(double)>& alpha, const std::function<double(double)>& sigma,
                      double t, double h = 1e-4);

GTASR_NS_END
}  // namespace gtasr
