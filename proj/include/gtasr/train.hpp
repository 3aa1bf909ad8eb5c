#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gtasr/checkpoint.hpp"
#include "gtasr/config.hpp"
#include "gtasr/data.hpp"
#include "gtasr/losses.hpp"
#include "gtasr/model.hpp"

namespace gtasr {

class TrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AdamParams {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<real>> m;
    std::vector<std::vector<real>> v;
};

/// One Adam update of `params` from explicit gradients. State is created lazily on the first call.
void adam_step(const std::vector<Tensor>& params, const std::vector<std::span<const real>>& grads, AdamState& state,
               const AdamParams& hp);
/// Same, reading each parameter's accumulated gradient.
void adam_step(const std::vector<Tensor>& params, AdamState& state, const AdamParams& hp);

struct TrainConfig {
    std::uint64_t seed = 42;
    int stage = 1;
    std::int64_t iterations_stage1 = 3000;
    std::int64_t iterations_stage2 = 600;
    std::int64_t sync_period = 150;
    int batch = 8;
    int total_steps = 5;        // T
    int late_total_steps = 0;   // >0 switches to this T for the second half of a stage
    double n_stage1 = 2.5;
    double n_stage2 = 1.0;
    AdamParams adam;
    LossWeights weights;
    double charbonnier_eps = 1e-3;
    std::uint64_t percep_seed = 1234;
    StabChannelMode stab_mode = StabChannelMode::Average;
    DataConfig data;
    ModelConfig model;
    std::int64_t log_interval = 10;
    int val_count = 64;
    std::filesystem::path out_dir;
    std::filesystem::path init_checkpoint;

    /// Reads every recognised key; unknown keys are an error.
    static TrainConfig from_config(const Config& cfg);
    Config to_config() const;
    void validate() const;
    std::int64_t iterations() const { return stage == 1 ? iterations_stage1 : iterations_stage2; }
};

/// Stage-specific schedule at iteration i (1-based).
NoiseSchedule schedule_for(const TrainConfig& cfg, int stage, std::int64_t iteration);

struct IterationStats {
    std::int64_t iteration = 0;
    int t = 0;
    int t_prime = 0;
    double total = 0, ct = 0, ta = 0, dtm = 0, stab = 0, rect = 0;
    double wall_seconds = 0;
};

enum class HookPoint {
    AfterSync,      // target refreshed (stage 2, sync iterations only)
    AfterBackward,  // gradients accumulated, parameters not yet updated
    AfterStep,      // optimizer step applied
};

struct TrainHooks {
    std::function<void(HookPoint, std::int64_t iteration, const NetworkTriplet&)> on_event;
};

struct ValSummary {
    double psnr = 0.0;
    double ssim = 0.0;
    int count = 0;
};

struct TrainResult {
    NetworkTriplet nets;
    AdamState adam;
    std::vector<IterationStats> history;
    ValSummary val;
    Checkpoint checkpoint;
};

/// Stage I: consistency training with trajectory alignment, from a seeded initialisation.
TrainResult train_stage1(const TrainConfig& cfg, const TrainHooks& hooks = {});
/// Stage II: DTM with structural rectification, starting from a Stage I checkpoint.
TrainResult train_stage2(const TrainConfig& cfg, const Checkpoint& init, const TrainHooks& hooks = {});
/// Runs the configured stage and writes checkpoint.bin, metrics.csv, config.txt and summary.csv into out_dir.
TrainResult run_training(const TrainConfig& cfg, const TrainHooks& hooks = {});

/// One-step restoration quality on the first `count` validation instances.
ValSummary evaluate_val(const PredictorNet& net, const DataConfig& data, int total_steps, int count,
                        std::uint64_t seed);

Checkpoint make_checkpoint(const NetworkTriplet& nets, const AdamState& adam, std::int64_t iteration, int stage);
/// Restores the online (and, when present, target and optimizer) state.
void restore_checkpoint(const Checkpoint& ck, NetworkTriplet& nets, AdamState* adam);
/// Architecture recorded in a checkpoint (width from the input convolution).
ModelConfig model_config_from_checkpoint(const Checkpoint& ck);
/// Loads a single network from the "online/" arrays of a checkpoint.
PredictorNet network_from_checkpoint(const Checkpoint& ck, const ModelConfig& model);
/// Target network of a Stage II checkpoint (falls back to the online weights).
PredictorNet target_from_checkpoint(const Checkpoint& ck, const ModelConfig& model);

std::string metrics_csv_header();
std::string metrics_csv_row(const IterationStats& s);

}  // namespace gtasr
