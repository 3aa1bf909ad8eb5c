// Finite-difference oracle for every differentiable op, the predictor and the training losses.
// This file is compiled against both precision builds: the double build checks the full
// 1e-3 relative-error contract on every coordinate, the float build checks the ops whose
// gradients are large enough to be resolved by float32 finite differences.

#include <gtest/gtest.h>

#include <random>

#include "gtasr/gradcheck.hpp"
#include "gtasr/gradient_suite.hpp"
#include "gtasr/losses.hpp"

using namespace gtasr;

#if GTASR_USE_DOUBLE

TEST(GradientSuiteF64, EveryCheckWithinTolerance) {
    GradSuiteOptions opts;
    opts.step = 1e-5;
    const auto results = run_gradient_suite(opts);
    ASSERT_FALSE(results.empty());
    for (const auto& r : results) {
        EXPECT_TRUE(r.pass) << r.name << " max rel error " << r.max_rel_error << " over " << r.coords << " coords";
        EXPECT_GT(r.coords, 0) << r.name;
    }
}

TEST(GradientSuiteF64, DetectsABrokenGradient) {
    // Sanity check of the oracle itself: a function whose "gradient" is wrong must fail.
    std::mt19937_64 rng(4);
    Tensor x = Tensor::randn({6}, rng);
    x.set_requires_grad(true);
    const auto r = finite_difference_check_params([&] { return sum(mul(stop_gradient(x), x)); },
                                                  [&] { return sum(square(x)); }, {x}, 1e-5);
    EXPECT_GT(r.max_rel_error, 0.4);
}

#else

TEST(GradientsF32, CharbonnierOnRandomInput) {
    std::mt19937_64 rng(11);
    const Tensor x = Tensor::randn({1, 1, 4, 4}, rng);
    const Tensor zero = Tensor::zeros(x.shape());
    const auto r = finite_difference_check([&](const Tensor& v) { return sum(charbonnier_per_sample(v, zero)); }, x);
    EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(GradientsF32, ElementwiseOps) {
    std::mt19937_64 rng(12);
    const Tensor x = Tensor::uniform({8}, real(0.5), real(2.0), rng);
    for (auto f : std::vector<std::function<Tensor(const Tensor&)>>{
             [](const Tensor& v) { return sum(square(v)); },
             [](const Tensor& v) { return sum(sqrt_eps(v)); },
             [](const Tensor& v) { return sum(abs(v)); },
             [](const Tensor& v) { return sum(mul(v, add_scalar(v, 1))); },
         }) {
        EXPECT_LT(finite_difference_check(f, x).max_rel_error, 1e-3);
    }
}

#endif
