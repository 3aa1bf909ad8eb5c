#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gtasr/data.hpp"
#include "gtasr/model.hpp"
#include "gtasr/pfode.hpp"
#include "gtasr/schedule.hpp"

namespace gtasr {

/// Reported in place of +infinity when two images are identical.
inline constexpr double kPsnrSentinel = 99.0;

/// 10 log10(1 / MSE) over all elements, peak 1.
double psnr(const Tensor& a, const Tensor& b);
/// Mean of per-image PSNR over the batch dimension.
double batch_psnr(const Tensor& a, const Tensor& b);

/// Mean local SSIM for single-channel images (7x7 Gaussian window, sigma 1.5,
/// K1 0.01, K2 0.03, L 1, valid window positions only). Batches are averaged per image.
double ssim(const Tensor& a, const Tensor& b);

struct ConsistencyRecord {
    int t = 0;
    Tensor prediction;
    double psnr = 0.0;
};

/// For each t in 1..T, predicts from Q(x0, y0, t, eps) with one fixed eps and
/// scores the prediction against x0.
std::vector<ConsistencyRecord> consistency_probe(const Predictor& f, const Tensor& x0, const Tensor& y0,
                                                 const NoiseSchedule& schedule, std::uint64_t seed);

struct DecouplingSample {
    int t_prime = 0;
    double pixel_mae = 0.0;
    double structural_mae = 0.0;
    std::uint64_t instance = 0;
};

/// Both MAEs for one instance: the frozen target evaluated on the re-noised estimate
/// Q(x0_hat, t') and on the real state Q(x0, t') with shared noise.
DecouplingSample decoupling_sample(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0,
                                   const Tensor& y0, int t_prime, const Tensor& noise,
                                   const NoiseSchedule& schedule);

struct DecouplingOptions {
    DataConfig data;
    NoiseSchedule schedule;
    int t_prime = 0;  // 0 draws t' uniformly from 1..T per instance
    int count = 200;
    std::uint64_t seed = 42;
};

/// Probe over `count` validation instances. x0_hat is the one-step output of `online`
/// (prediction from y0 + eps at t = T); `target` is the frozen network under test.
std::vector<DecouplingSample> decoupling_scatter(const PredictorNet& target, const PredictorNet& online,
                                                 const DecouplingOptions& opt);

/// Appendix-style structural bound on one instance: returns
/// (Term I + Term II) - ||S(f'(x_hat_t')) - S(x0)||_1, which must be >= 0.
double triangle_slack(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0,
                      int t_prime, const Tensor& noise, const NoiseSchedule& schedule);

double mean_structural_mae(const std::vector<DecouplingSample>& samples);

// CSV writers. Numbers use a fixed `%.9g` format so repeated runs give identical bytes.
std::string consistency_csv(const std::vector<ConsistencyRecord>& records);
std::string decoupling_csv(const std::vector<DecouplingSample>& samples);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
std::string format_number(double v);

}  // namespace gtasr
