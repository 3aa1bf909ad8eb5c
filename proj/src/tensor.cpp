#include "gtasr/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace gtasr {
GTASR_NS_BEGIN

namespace {

std::atomic<std::uint64_t> g_next_seq{1};

bool is_single(const Tensor& t) { return t.numel() == 1; }

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) {
        if (e <= 0) throw TensorError("non-positive extent in shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

namespace {

Tensor make_leaf(Shape shape, std::vector<real> values) {
    auto impl = std::make_shared<detail::TensorImpl>();
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw TensorError("shape " + shape_str(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
    }
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    return Tensor(std::move(impl));
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape) {
    return make_leaf(shape, std::vector<real>(static_cast<std::size_t>(shape_numel(shape)), real(0)));
}

Tensor Tensor::full(const Shape& shape, real value) {
    return make_leaf(shape, std::vector<real>(static_cast<std::size_t>(shape_numel(shape)), value));
}

Tensor Tensor::from_vector(const Shape& shape, std::vector<real> values) {
    return make_leaf(shape, std::move(values));
}

Tensor Tensor::scalar(real value) { return make_leaf({}, {value}); }

Tensor Tensor::randn(const Shape& shape, std::mt19937_64& rng) {
    std::normal_distribution<real> dist(real(0), real(1));
    std::vector<real> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = dist(rng);
    return make_leaf(shape, std::move(v));
}

Tensor Tensor::uniform(const Shape& shape, real lo, real hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<real> dist(lo, hi);
    std::vector<real> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = dist(rng);
    return make_leaf(shape, std::move(v));
}

const Shape& Tensor::shape() const {
    if (!impl_) throw TensorError("undefined tensor");
    return impl_->shape;
}

std::int64_t Tensor::dim(int axis) const {
    const auto& s = shape();
    if (axis < 0 || axis >= static_cast<int>(s.size())) throw TensorError("axis out of range");
    return s[static_cast<std::size_t>(axis)];
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

std::int64_t Tensor::numel() const {
    if (!impl_) throw TensorError("undefined tensor");
    return static_cast<std::int64_t>(impl_->data.size());
}

std::span<const real> Tensor::data() const& {
    if (!impl_) throw TensorError("undefined tensor");
    return impl_->data;
}

std::span<real> Tensor::mutable_data() {
    if (!impl_) throw TensorError("undefined tensor");
    if (impl_->node) throw TensorError("cannot mutate a tensor recorded on the graph");
    return impl_->data;
}

real Tensor::item() const {
    if (numel() != 1) throw TensorError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
    if (!impl_) throw TensorError("undefined tensor");
    if (impl_->node) throw TensorError("requires_grad can only be set on leaves");
    impl_->requires_grad = flag;
    if (flag) {
        impl_->grad.assign(impl_->data.size(), real(0));
    } else {
        impl_->grad.clear();
    }
    return *this;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

std::span<const real> Tensor::grad() const {
    if (!impl_) throw TensorError("undefined tensor");
    return impl_->grad;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

void Tensor::zero_grad() {
    if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), real(0));
}

Tensor Tensor::clone() const { return make_leaf(shape(), impl_->data); }

std::vector<real> Tensor::to_vector() const { return std::vector<real>(data().begin(), data().end()); }

// ---------------------------------------------------------------------------
// Graph plumbing

namespace detail {

real* grad_buffer(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), real(0));
    return t.grad.data();
}

void accumulate_grad(TensorImpl& t, std::span<const real> values) {
    real* g = grad_buffer(t);
    for (std::size_t i = 0; i < values.size(); ++i) g[i] += values[i];
}

Tensor make_result(Shape shape, std::vector<real> data, std::vector<Tensor> inputs, const char* name,
                   const std::function<BackwardFn(TensorImpl* out)>& make_backward) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    const bool needs_grad =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (needs_grad) {
        auto node = std::make_shared<Node>();
        node->seq = g_next_seq.fetch_add(1);
        node->name = name;
        for (auto& in : inputs) node->inputs.push_back(in.impl_ptr());
        node->backward = make_backward(impl.get());
        impl->requires_grad = true;
        impl->node = std::move(node);
    }
    return Tensor(std::move(impl));
}

}  // namespace detail

Tensor stop_gradient(const Tensor& a) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = a.shape();
    impl->data = a.impl()->data;
    return Tensor(std::move(impl));
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw TensorError("backward on undefined tensor");
    if (loss.numel() != 1) throw TensorError("backward needs a scalar loss, got " + shape_str(loss.shape()));
    auto* root = loss.impl();
    if (!root->requires_grad) return;
    if (!root->node) {
        detail::grad_buffer(*root)[0] += real(1);
        return;
    }

    // Collect every node reachable from the loss.
    std::vector<std::shared_ptr<detail::TensorImpl>> order;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<std::shared_ptr<detail::TensorImpl>> stack{loss.impl_ptr()};
    while (!stack.empty()) {
        auto t = std::move(stack.back());
        stack.pop_back();
        if (!t->node || !seen.insert(t.get()).second) continue;
        if (t->node->consumed) throw TensorError("graph already consumed by a previous backward pass");
        for (auto& in : t->node->inputs) {
            if (in->requires_grad) stack.push_back(in);
        }
        order.push_back(std::move(t));
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a->node->seq > b->node->seq; });

    detail::grad_buffer(*root)[0] += real(1);
    for (auto& t : order) {
        auto& node = *t->node;
        if (!t->grad.empty()) node.backward(t->grad);
        node.consumed = true;
        node.backward = nullptr;
        // Interior gradients are no longer needed once propagated.
        if (t.get() != root) {
            t->grad.clear();
            t->grad.shrink_to_fit();
        }
    }
    for (auto& t : order) t->node->inputs.clear();
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

enum class BinOp { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
    const bool same = a.shape() == b.shape() || (a.numel() == b.numel() && is_single(a));
    if (!same && !is_single(a) && !is_single(b)) {
        throw TensorError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    }
    const bool a_small = !same && is_single(a);
    const bool b_small = !same && is_single(b);
    const Shape out_shape = a_small ? b.shape() : a.shape();
    const std::size_t n = static_cast<std::size_t>(shape_numel(out_shape));
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<real> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const real x = a_small ? ad[0] : ad[i];
        const real y = b_small ? bd[0] : bd[i];
        switch (op) {
            case BinOp::Add: out[i] = x + y; break;
            case BinOp::Sub: out[i] = x - y; break;
            case BinOp::Mul: out[i] = x * y; break;
        }
    }
    auto ai = a.impl();
    auto bi = b.impl();
    return detail::make_result(out_shape, std::move(out), {a, b}, name, [=](detail::TensorImpl*) {
        return [=](const std::vector<real>& g) {
            if (ai->requires_grad) {
                real* ga = detail::grad_buffer(*ai);
                for (std::size_t i = 0; i < n; ++i) {
                    real d = g[i];
                    if (op == BinOp::Mul) d *= b_small ? bi->data[0] : bi->data[i];
                    ga[a_small ? 0 : i] += d;
                }
            }
            if (bi->requires_grad) {
                real* gb = detail::grad_buffer(*bi);
                for (std::size_t i = 0; i < n; ++i) {
                    real d = g[i];
                    if (op == BinOp::Sub) d = -d;
                    if (op == BinOp::Mul) d *= a_small ? ai->data[0] : ai->data[i];
                    gb[b_small ? 0 : i] += d;
                }
            }
        };
    });
}

/// Unary op with a pointwise derivative computed from (input, output).
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
    const auto ad = a.data();
    std::vector<real> out(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i]);
    auto ai = a.impl();
    return detail::make_result(a.shape(), std::move(out), {a}, name, [=](detail::TensorImpl* o) {
        return [=](const std::vector<real>& g) {
            real* ga = detail::grad_buffer(*ai);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(ai->data[i], o->data[i]);
        };
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul, "mul"); }

Tensor scale(const Tensor& a, real factor) {
    return unary(a, "scale", [factor](real x) { return x * factor; }, [factor](real, real) { return factor; });
}

Tensor add_scalar(const Tensor& a, real value) {
    return unary(a, "add_scalar", [value](real x) { return x + value; }, [](real, real) { return real(1); });
}

Tensor abs(const Tensor& a) {
    return unary(
        a, "abs", [](real x) { return std::abs(x); },
        [](real x, real) { return x > 0 ? real(1) : (x < 0 ? real(-1) : real(0)); });
}

Tensor square(const Tensor& a) {
    return unary(a, "square", [](real x) { return x * x; }, [](real x, real) { return real(2) * x; });
}

Tensor sqrt_eps(const Tensor& a) {
    return unary(
        a, "sqrt_eps", [](real x) { return std::sqrt(x + real(kSqrtEps)); },
        [](real, real y) { return real(0.5) / y; });
}

Tensor silu(const Tensor& a) {
    return unary(
        a, "silu", [](real x) { return x / (real(1) + std::exp(-x)); },
        [](real x, real) {
            const real s = real(1) / (real(1) + std::exp(-x));
            return s * (real(1) + x * (real(1) - s));
        });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
    if (a.numel() == 0) throw TensorError("sum of empty tensor");
    double acc = 0.0;
    for (real x : a.data()) acc += x;
    auto ai = a.impl();
    return detail::make_result({}, {static_cast<real>(acc)}, {a}, "sum", [=](detail::TensorImpl*) {
        return [=](const std::vector<real>& g) {
            real* ga = detail::grad_buffer(*ai);
            for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g[0];
        };
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw TensorError("mean of empty tensor");
    double acc = 0.0;
    for (real x : a.data()) acc += x;
    const std::size_t n = a.data().size();
    auto ai = a.impl();
    return detail::make_result({}, {static_cast<real>(acc / static_cast<double>(n))}, {a}, "mean",
                               [=](detail::TensorImpl*) {
                                   return [=](const std::vector<real>& g) {
                                       real* ga = detail::grad_buffer(*ai);
                                       const real w = g[0] / static_cast<real>(n);
                                       for (std::size_t i = 0; i < n; ++i) ga[i] += w;
                                   };
                               });
}

Tensor l1_mean(const Tensor& a) { return mean(abs(a)); }

Tensor mean_per_sample(const Tensor& a) {
    if (a.rank() < 1) throw TensorError("mean_per_sample needs a leading batch axis");
    const std::int64_t batch = a.dim(0);
    const std::int64_t inner = a.numel() / batch;
    const auto ad = a.data();
    std::vector<real> out(static_cast<std::size_t>(batch));
    for (std::int64_t b = 0; b < batch; ++b) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < inner; ++i) acc += ad[static_cast<std::size_t>(b * inner + i)];
        out[static_cast<std::size_t>(b)] = static_cast<real>(acc / static_cast<double>(inner));
    }
    auto ai = a.impl();
    return detail::make_result({batch}, std::move(out), {a}, "mean_per_sample", [=](detail::TensorImpl*) {
        return [=](const std::vector<real>& g) {
            real* ga = detail::grad_buffer(*ai);
            for (std::int64_t b = 0; b < batch; ++b) {
                const real w = g[static_cast<std::size_t>(b)] / static_cast<real>(inner);
                for (std::int64_t i = 0; i < inner; ++i) ga[b * inner + i] += w;
            }
        };
    });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    if (shape_numel(shape) != a.numel()) {
        throw TensorError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
    }
    auto ai = a.impl();
    return detail::make_result(shape, ai->data, {a}, "reshape", [=](detail::TensorImpl*) {
        return [=](const std::vector<real>& g) { detail::accumulate_grad(*ai, g); };
    });
}

GTASR_NS_END
}  // namespace gtasr
