#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtasr/precision.hpp"

namespace gtasr {

struct GradSuiteEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::int64_t coords = 0;
    bool pass = false;
};

struct GradSuiteOptions {
    std::uint64_t seed = 42;
    double step = 1e-3;
    double tolerance = 1e-3;
    int image_size = 8;
    int model_width = 16;
    std::int64_t max_coords_per_tensor = 48;
};

GTASR_NS_BEGIN

/// Finite-difference checks of every differentiable op, the predictor and each training loss
/// with respect to the online parameters (stop-gradient branches frozen in the oracle).
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts);

GTASR_NS_END

// Explicit handle on the double-precision instantiation, callable from float builds.
namespace f64 {
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts);
}

}  // namespace gtasr
