#include "gtasr/model.hpp"

#include <cmath>
#include <stdexcept>

namespace gtasr {
GTASR_NS_BEGIN

PredictorNet::PredictorNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.image_channels < 1 || cfg.width < 1) throw std::invalid_argument("invalid model config");
    std::mt19937_64 rng(seed);
    const int c = cfg.image_channels;
    const int w = cfg.width;
    add_conv("in_conv", 2 * c + 1, w, 3, 1.0, rng);
    add_conv("enc", w, w, 3, 1.0, rng);
    add_conv("down", w, 2 * w, 3, 1.0, rng);
    add_conv("mid1", 2 * w, 2 * w, 3, 1.0, rng);
    add_conv("mid2", 2 * w, 2 * w, 3, 1.0, rng);
    add_conv("up_proj", 2 * w, w, 1, 1.0, rng);
    add_conv("dec", w, w, 3, 1.0, rng);
    // Small output layer so an untrained net starts close to returning y0.
    add_conv("out_conv", w, c, 3, 0.1, rng);
}

void PredictorNet::add_conv(const std::string& name, int in_c, int out_c, int k, double gain, std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(in_c) * k * k;
    const auto bound = static_cast<real>(gain * std::sqrt(6.0 / fan_in));
    params_.emplace_back(name + ".weight", Tensor::uniform({out_c, in_c, k, k}, -bound, bound, rng));
    params_.emplace_back(name + ".bias", Tensor::zeros({out_c}));
}

std::vector<Tensor> PredictorNet::parameters() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& [_, t] : params_) out.push_back(t);
    return out;
}

const Tensor& PredictorNet::param(const std::string& name) const {
    for (const auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw std::out_of_range("no parameter named " + name);
}

std::int64_t PredictorNet::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
}

void PredictorNet::copy_values_from(const PredictorNet& other) {
    if (other.params_.size() != params_.size()) throw std::invalid_argument("architecture mismatch in copy");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& src = other.params_[i].second;
        auto& dst = params_[i].second;
        if (src.shape() != dst.shape() || other.params_[i].first != params_[i].first) {
            throw std::invalid_argument("architecture mismatch at " + params_[i].first);
        }
        auto d = dst.mutable_data();
        std::copy(src.data().begin(), src.data().end(), d.begin());
    }
}

void PredictorNet::set_trainable(bool flag) {
    for (auto& [_, t] : params_) t.set_requires_grad(flag);
}

void PredictorNet::zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
}

Tensor PredictorNet::conv(const std::string& name, const Tensor& x, int stride, int padding) const {
    return add_channel_bias(conv2d(x, param(name + ".weight"), stride, padding), param(name + ".bias"));
}

Tensor PredictorNet::predict(const Tensor& x_t, const Tensor& y0, int t, int total_steps) const {
    if (x_t.shape() != y0.shape()) {
        throw TensorError("predict: x_t " + shape_str(x_t.shape()) + " and y0 " + shape_str(y0.shape()) + " differ");
    }
    if (x_t.rank() != 4 || x_t.dim(1) != cfg_.image_channels) {
        throw TensorError("predict: expected [N," + std::to_string(cfg_.image_channels) + ",H,W] input, got " +
                          shape_str(x_t.shape()));
    }
    if (x_t.dim(2) % 2 != 0 || x_t.dim(3) % 2 != 0) throw TensorError("predict: spatial extents must be even");
    if (t < 0 || t > total_steps) throw std::out_of_range("predict: timestep outside [0, T]");
    if (t == 0) return x_t;

    const Shape plane_shape{x_t.dim(0), 1, x_t.dim(2), x_t.dim(3)};
    const Tensor t_plane = Tensor::full(plane_shape, static_cast<real>(t) / static_cast<real>(total_steps));
    const Tensor in = concat_channels({x_t, y0, t_plane});

    const Tensor h0 = silu(conv("in_conv", in, 1, 1));
    const Tensor skip = silu(conv("enc", h0, 1, 1));
    Tensor d = silu(conv("down", skip, 2, 1));
    d = silu(conv("mid1", d, 1, 1));
    d = silu(conv("mid2", d, 1, 1));
    const Tensor up = add(upsample_nearest(conv("up_proj", d, 1, 0), 2), skip);
    const Tensor dec = silu(conv("dec", up, 1, 1));
    return add(y0, conv("out_conv", dec, 1, 1));
}

Predictor PredictorNet::as_predictor(int total_steps) const {
    return [this, total_steps](const Tensor& x_t, const Tensor& y0, int t) {
        return stop_gradient(predict(x_t, y0, t, total_steps));
    };
}

NetworkTriplet::NetworkTriplet(const ModelConfig& cfg, std::uint64_t seed)
    : online(cfg, seed), reference(cfg, seed), target(cfg, seed) {
    online.set_trainable(true);
    // Reference and target keep gradient buffers so that a leak through a
    // stop-gradient bracket would be observable; they are never stepped.
    reference.set_trainable(true);
    target.set_trainable(true);
}

void NetworkTriplet::copy_reference() { reference.copy_values_from(online); }

void NetworkTriplet::sync_target() { target.copy_values_from(online); }

Tensor predict_frozen(const PredictorNet& net, const Tensor& x_t, const Tensor& y0, int t, int total_steps) {
    return stop_gradient(net.predict(x_t, y0, t, total_steps));
}

bool is_sync_iteration(std::int64_t iteration, std::int64_t period) {
    if (period < 1) throw std::invalid_argument("sync period must be >= 1");
    return iteration % period == 1 % period;
}

GTASR_NS_END
}  // namespace gtasr
