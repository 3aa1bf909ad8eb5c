#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gtasr/tensor.hpp"

namespace gtasr {
GTASR_NS_BEGIN

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::int64_t worst_index = -1;
    double worst_auto = 0.0;
    double worst_fd = 0.0;
    std::int64_t coords_checked = 0;
};

/// Central-difference check of backward() against f at x.
/// Error per coordinate is |g_auto - g_fd| / (|g_fd| + 1e-8); the maximum is reported.
GradCheckResult finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                        double h = 1e-3);

/// Same check with respect to existing trainable leaves (e.g. network parameters), which are
/// perturbed in place and restored. `max_coords_per_tensor` > 0 checks an evenly strided subset.
GradCheckResult finite_difference_check_params(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                                               double h = 1e-3, std::int64_t max_coords_per_tensor = 0);

/// Variant where the finite differences come from a separate oracle function, e.g. one that
/// holds stop-gradient branches fixed at their values at the unperturbed point.
GradCheckResult finite_difference_check_params(const std::function<Tensor()>& f, const std::function<Tensor()>& oracle,
                                               const std::vector<Tensor>& params, double h = 1e-3,
                                               std::int64_t max_coords_per_tensor = 0);

GTASR_NS_END
}  // namespace gtasr
