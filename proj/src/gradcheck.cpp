#include "gtasr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace gtasr {
GTASR_NS_BEGIN

GradCheckResult finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    Tensor leaf = x.clone();
    leaf.set_requires_grad(true);
    return finite_difference_check_params([&] { return f(leaf); }, {leaf}, h);
}

GradCheckResult finite_difference_check_params(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                                               double h, std::int64_t max_coords_per_tensor) {
    return finite_difference_check_params(f, f, params, h, max_coords_per_tensor);
}

GradCheckResult finite_difference_check_params(const std::function<Tensor()>& f, const std::function<Tensor()>& oracle,
                                               const std::vector<Tensor>& params, double h,
                                               std::int64_t max_coords_per_tensor) {
    for (auto p : params) p.zero_grad();
    backward(f());
    std::vector<std::vector<real>> analytic;
    for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());
    for (auto p : params) p.zero_grad();

    GradCheckResult result;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor p = params[k];
        auto values = p.mutable_data();
        const auto n = static_cast<std::int64_t>(values.size());
        const std::int64_t step =
            (max_coords_per_tensor > 0 && n > max_coords_per_tensor) ? (n + max_coords_per_tensor - 1) / max_coords_per_tensor : 1;
        for (std::int64_t i = 0; i < n; i += step) {
            const real saved = values[i];
            values[i] = static_cast<real>(saved + h);
            const double up = oracle().item();
            values[i] = static_cast<real>(saved - h);
            const double down = oracle().item();
            values[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double ad = analytic[k][static_cast<std::size_t>(i)];
            const double err = std::abs(ad - fd) / (std::abs(fd) + 1e-8);
            ++result.coords_checked;
            if (err > result.max_rel_error || result.worst_index < 0) {
                result.max_rel_error = std::max(result.max_rel_error, err);
                result.worst_index = i;
                result.worst_auto = ad;
                result.worst_fd = fd;
            }
        }
    }
    return result;
}

GTASR_NS_END
}  // namespace gtasr
