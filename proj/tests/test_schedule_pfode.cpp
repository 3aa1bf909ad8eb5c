#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gtasr/pfode.hpp"
#include "gtasr/schedule.hpp"

using namespace gtasr;

namespace {

double max_abs(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a.at(i)) - b.at(i)));
    return m;
}

Tensor img(std::mt19937_64& rng, std::int64_t n = 1, std::int64_t s = 8) {
    return Tensor::uniform({n, 1, s, s}, 0, 1, rng);
}

}  // namespace

TEST(Schedule, Boundaries) {
    const NoiseSchedule s(5, 2.5);
    EXPECT_EQ(coeff(s, 0), 0.0);
    EXPECT_EQ(coeff(s, 5), 1.0);
    EXPECT_DOUBLE_EQ(coeff(NoiseSchedule(5, 1.0), 2), 0.4);
}

TEST(Schedule, StrictlyIncreasing) {
    for (double n : {1.0, 2.5}) {
        const NoiseSchedule s(5, n);
        for (int t = 0; t < 5; ++t) EXPECT_LT(coeff(s, t), coeff(s, t + 1));
    }
}

TEST(Schedule, OutOfRangeThrows) {
    const NoiseSchedule s(5, 2.5);
    EXPECT_THROW(coeff(s, -1), std::out_of_range);
    EXPECT_THROW(coeff(s, 6), std::out_of_range);
    EXPECT_THROW(NoiseSchedule(0, 1.0), std::invalid_argument);
}

TEST(ForwardProject, EndpointsAndMismatch) {
    std::mt19937_64 rng(1);
    const NoiseSchedule s(5, 2.5);
    const Tensor x0 = img(rng), y0 = img(rng), eps = Tensor::randn({1, 1, 8, 8}, rng);
    EXPECT_EQ(forward_project(s, x0, y0, 0, eps).to_vector(), x0.to_vector());
    EXPECT_LT(max_abs(forward_project(s, x0, y0, 5, eps), add(y0, eps)), 1e-6);
    EXPECT_THROW(forward_project(s, x0, Tensor::zeros({1, 1, 4, 4}), 2, eps), TensorError);
}

TEST(ForwardProject, DifferenceIdentity) {
    std::mt19937_64 rng(2);
    const NoiseSchedule s(5, 2.5);
    for (int t = 0; t <= 5; ++t) {
        const Tensor a = img(rng), b = img(rng), y0 = img(rng), eps = Tensor::randn({1, 1, 8, 8}, rng);
        const Tensor lhs = sub(forward_project(s, a, y0, t, eps), forward_project(s, b, y0, t, eps));
        EXPECT_LT(max_abs(lhs, scale(sub(a, b), 1.0 - coeff(s, t))), 1e-6) << "t=" << t;
    }
}

TEST(DriftResidual, MatchedScheduleVanishes) {
    const double T = 5;
    auto f25 = [&](double t) { return std::pow(t / T, 2.5); };
    auto f1 = [&](double t) { return t / T; };
    EXPECT_LT(std::abs(drift_residual(f25, f25, 0.3 * T)), 1e-9);
    EXPECT_LT(std::abs(drift_residual(f1, f1, 0.7 * T)), 1e-9);
}

TEST(DriftResidual, MismatchedScheduleHandValue) {
    const double T = 5;
    const double r = drift_residual([&](double t) { return (t / T) * (t / T); }, [&](double t) { return t / T; }, 0.5 * T);
    EXPECT_NEAR(r, 0.5 / T, 1e-6);
}

TEST(DriftResidual, VanishingSigmaThrows) {
    EXPECT_THROW(drift_residual([](double t) { return t; }, [](double) { return 0.0; }, 1.0), std::domain_error);
}

TEST(Velocity, FixedPointAndLinearCase) {
    std::mt19937_64 rng(3);
    const Tensor x = img(rng), f = img(rng);
    for (real v : velocity_predict(x, x, 2.0, 2.5).to_vector()) EXPECT_EQ(v, 0);
    const Tensor v = velocity_predict(x, f, 5.0, 1.0);
    EXPECT_LT(max_abs(v, scale(sub(x, f), 1.0 / 5.0)), 1e-6);
    EXPECT_EQ(velocity_predict(x, f, 3.0, 2.5).to_vector(), velocity_ideal(x, f, 3.0, 2.5).to_vector());
    EXPECT_THROW(velocity_ideal(x, f, 0.0, 1.0), std::domain_error);
}

TEST(Velocity, ScalarCase) {
    const Tensor x0 = Tensor::full({1}, 0.25f);
    const Tensor v = velocity_ideal(add_scalar(x0, 0.5), x0, 1.0, 2.0);
    EXPECT_NEAR(v.item(), 1.0, 1e-6);
}

TEST(StepExact, ZeroTargetAndClosedForm) {
    std::mt19937_64 rng(4);
    const NoiseSchedule s(5, 2.5);
    const Tensor x0 = img(rng), y0 = img(rng), eps = Tensor::randn({1, 1, 8, 8}, rng);
    const Tensor xT = add(y0, eps);
    EXPECT_EQ(step_exact(xT, x0, 5, 0, 2.5).to_vector(), x0.to_vector());
    for (int tp = 1; tp < 5; ++tp)
        EXPECT_LT(max_abs(step_exact(xT, x0, 5, tp, 2.5), forward_project(s, x0, y0, tp, eps)), 1e-5);
    EXPECT_THROW(step_exact(xT, x0, 3, 3, 2.5), std::invalid_argument);
}

TEST(StepExact, SmallStepStaysClose) {
    std::mt19937_64 rng(5);
    const Tensor x = img(rng), f = img(rng);
    const int t = 50;
    const double n = 2.5, bound = (1 - std::pow((t - 1.0) / t, n)) * max_abs(x, f);
    EXPECT_LE(max_abs(step_exact(x, f, t, t - 1, n), x), bound + 1e-6);
}

TEST(Sampler, GridShape) {
    EXPECT_EQ(sampler_grid(5, 1), (std::vector<int>{5, 0}));
    EXPECT_EQ(sampler_grid(5, 5), (std::vector<int>{5, 4, 3, 2, 1, 0}));
    EXPECT_EQ(sampler_grid(5, 2).size(), 3u);
    EXPECT_THROW(sampler_grid(5, 6), std::invalid_argument);
}

TEST(Sampler, OracleRecoversOrigin) {
    std::mt19937_64 rng(6);
    const Tensor x0 = img(rng), y0 = img(rng);
    const Predictor oracle = [&](const Tensor&, const Tensor&, int) { return x0; };
    for (int steps : {1, 2, 3, 4, 5}) {
        const Tensor out = sample_multistep(oracle, y0, SamplerConfig{steps, NoiseSchedule(5, 2.5)}, 11);
        EXPECT_LT(max_abs(out, x0), 1e-5) << steps;
    }
    EXPECT_EQ(sample_onestep(oracle, y0, NoiseSchedule(5, 2.5), 3).to_vector(), x0.to_vector());
}

TEST(Sampler, OneStepMatchesMultistepAndIsDeterministic) {
    std::mt19937_64 rng(7);
    const Tensor y0 = img(rng);
    const Predictor shrink = [](const Tensor& x, const Tensor& y, int) { return scale(add(x, y), 0.5); };
    const NoiseSchedule s(5, 2.5);
    const Tensor a = sample_onestep(shrink, y0, s, 9);
    EXPECT_EQ(a.to_vector(), sample_multistep(shrink, y0, SamplerConfig{1, s}, 9).to_vector());
    EXPECT_EQ(a.to_vector(), sample_onestep(shrink, y0, s, 9).to_vector());
    EXPECT_EQ(a.shape(), y0.shape());
}
