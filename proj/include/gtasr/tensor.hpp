#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtasr/precision.hpp"

namespace gtasr {
GTASR_NS_BEGIN

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised on shape mismatches, misuse of the tape and other contract violations.
class TensorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

/// Dense row-major tensor handle. Copies share storage; use clone() for a value copy.
///
/// Tensors produced by an op whose inputs require gradients carry a node on the
/// differentiation graph. Nodes are recorded with a monotonically increasing
/// sequence number so the reverse pass is a reverse walk in recording order.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, real value);
    static Tensor from_vector(const Shape& shape, std::vector<real> values);
    static Tensor scalar(real value);
    static Tensor randn(const Shape& shape, std::mt19937_64& rng);
    static Tensor uniform(const Shape& shape, real lo, real hi, std::mt19937_64& rng);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::int64_t dim(int axis) const;
    int rank() const;
    std::int64_t numel() const;

    std::span<const real> data() const&;
    // A temporary's view would dangle once the temporary releases its storage.
    std::span<const real> data() const&& = delete;
    /// Writable view; only allowed on tensors that are not part of a recorded graph.
    std::span<real> mutable_data();
    real item() const;
    real at(std::int64_t flat_index) const { return data()[static_cast<std::size_t>(flat_index)]; }

    bool requires_grad() const;
    /// Marks a leaf as trainable and allocates its (zeroed) gradient buffer.
    Tensor& set_requires_grad(bool flag);
    bool is_leaf() const;

    /// Accumulated gradient. Always sized like the tensor for trainable leaves.
    std::span<const real> grad() const;
    bool has_grad() const;
    void zero_grad();

    /// Deep value copy with no graph history.
    Tensor clone() const;
    std::vector<real> to_vector() const;

    detail::TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<real> data;
    std::vector<real> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> node;
};

using BackwardFn = std::function<void(const std::vector<real>& grad_out)>;

struct Node {
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn backward;
    bool consumed = false;
    const char* name = "";
};

/// Builds the output tensor of an op. Records a graph node when any input requires grad.
Tensor make_result(Shape shape, std::vector<real> data, std::vector<Tensor> inputs,
                   const char* name, const std::function<BackwardFn(TensorImpl* out)>& make_backward);

/// Adds `values` into the gradient buffer of `t` (allocating it on first use).
void accumulate_grad(TensorImpl& t, std::span<const real> values);
real* grad_buffer(TensorImpl& t);

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

/// Binary ops accept equal shapes or a single-element operand (scalar broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real factor);
Tensor add_scalar(const Tensor& a, real value);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
/// sqrt(x + 1e-12); the offset keeps the derivative finite at zero.
Tensor sqrt_eps(const Tensor& a);
Tensor silu(const Tensor& a);

inline constexpr double kSqrtEps = 1e-12;

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(real s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, real s) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// mean(|a|)
Tensor l1_mean(const Tensor& a);
/// Mean over every axis except the first; result has shape [N].
Tensor mean_per_sample(const Tensor& a);

// ---------------------------------------------------------------------------
// Image ops (NCHW)

/// Cross-correlation with zero padding. Kernel layout OIHW.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
/// Adds bias[c] to every element of channel c.
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);
Tensor upsample_nearest(const Tensor& input, int factor);
Tensor concat_channels(const std::vector<Tensor>& parts);
/// Mean over the channel axis, keeping it as extent 1.
Tensor channel_mean(const Tensor& input);
/// Scales every spatial feature vector to unit L2 norm across channels.
Tensor channel_normalize(const Tensor& input, real eps = real(1e-10));
Tensor reshape(const Tensor& a, const Shape& shape);

// ---------------------------------------------------------------------------
// Graph control

/// Identity forward; the result is a constant, so nothing flows back into `a`.
Tensor stop_gradient(const Tensor& a);

/// Reverse-mode pass from a single-element loss. Gradients accumulate into the
/// trainable leaves reachable from `loss`. Each recorded graph may be consumed once.
void backward(const Tensor& loss);

GTASR_NS_END
}  // namespace gtasr
