#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gtasr/pfode.hpp"
#include "gtasr/tensor.hpp"

namespace gtasr {
GTASR_NS_BEGIN

struct ModelConfig {
    int image_channels = 1;
    int width = 16;  // channels at full resolution; the half-resolution level uses 2x
};

/// Conditional clean-image predictor f(x_t, y0, t).
///
/// Input is the channel concatenation [x_t, y0, t/T plane]. The body is a two-level
/// encoder-decoder (SiLU, stride-2 downsampling, nearest upsampling) with one additive
/// skip between the full-resolution encoder and decoder, and the output is added to y0.
/// At t = 0 the predictor is the identity on x_t, which pins the trajectory origin.
class PredictorNet {
public:
    PredictorNet() = default;
    PredictorNet(const ModelConfig& cfg, std::uint64_t seed);

    Tensor predict(const Tensor& x_t, const Tensor& y0, int t, int total_steps) const;

    const ModelConfig& config() const { return cfg_; }
    const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return params_; }
    std::vector<Tensor> parameters() const;
    const Tensor& param(const std::string& name) const;
    std::int64_t parameter_count() const;

    /// Overwrites every parameter value from `other` (same architecture required).
    void copy_values_from(const PredictorNet& other);
    void set_trainable(bool flag);
    void zero_grad();

    /// Predictor view of this network for the samplers (gradients cut at the output).
    Predictor as_predictor(int total_steps) const;

private:
    Tensor conv(const std::string& name, const Tensor& x, int stride, int padding) const;
    void add_conv(const std::string& name, int in_c, int out_c, int k, double gain, std::mt19937_64& rng);

    ModelConfig cfg_;
    std::vector<std::pair<std::string, Tensor>> params_;
};

/// Online parameters, the per-step stop-gradient reference copy and the periodically
/// synchronised target copy. Only the online set is ever trained.
struct NetworkTriplet {
    PredictorNet online;
    PredictorNet reference;
    PredictorNet target;

    NetworkTriplet() = default;
    NetworkTriplet(const ModelConfig& cfg, std::uint64_t seed);

    void copy_reference();
    void sync_target();
};

/// Frozen-network evaluation: output is a graph constant.
Tensor predict_frozen(const PredictorNet& net, const Tensor& x_t, const Tensor& y0, int t, int total_steps);

/// Algorithm-level sync rule: the target is refreshed at iterations i with i = 1 (mod period).
bool is_sync_iteration(std::int64_t iteration, std::int64_t period);

GTASR_NS_END
}  // namespace gtasr
