#include "gtasr/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "gtasr/losses.hpp"

namespace gtasr {

namespace {

// Plain double-precision image used inside the generators.
struct Plane {
    int h = 0, w = 0;
    std::vector<double> v;
    Plane(int hh, int ww, double fill = 0.0) : h(hh), w(ww), v(static_cast<std::size_t>(hh) * ww, fill) {}
    double& operator()(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    double operator()(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane to_plane(const Tensor& t) {
    if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 1) throw std::invalid_argument("expected a [1,1,H,W] image");
    Plane p(static_cast<int>(t.dim(2)), static_cast<int>(t.dim(3)));
    auto d = t.data();
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = d[i];
    return p;
}

Tensor to_tensor(const Plane& p) {
    std::vector<real> out(p.v.size());
    for (std::size_t i = 0; i < p.v.size(); ++i) out[i] = static_cast<real>(p.v[i]);
    return Tensor::from_vector({1, 1, p.h, p.w}, std::move(out));
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Plane blur_plane(const Plane& src, double sigma) {
    if (sigma <= 0.0) return src;
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double total = 0.0;
    for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& x : k) x /= total;

    // Half-sample symmetric extension (dcba|abcd). Unlike edge replication it adds no
    // spurious border gradients, so structure can only decay as sigma grows.
    auto mirror = [](int i, int n) {
        const int period = 2 * n;
        i %= period;
        if (i < 0) i += period;
        return i < n ? i : period - 1 - i;
    };
    Plane tmp(src.h, src.w), out(src.h, src.w);
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * src(y, mirror(x + i, src.w));
            tmp(y, x) = acc;
        }
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(mirror(y + i, src.h), x);
            out(y, x) = acc;
        }
    return out;
}

void normalize01(Plane& p) {
    const auto [lo, hi] = std::minmax_element(p.v.begin(), p.v.end());
    const double a = *lo, span = *hi - *lo;
    for (double& x : p.v) x = span > 0 ? (x - a) / span : 0.5;
}

Plane gen_grf(std::mt19937_64& rng, int size) {
    Plane p(size, size);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& x : p.v) x = n(rng);
    p = blur_plane(p, uniform(rng, 1.0, 3.0) * size / 32.0);
    normalize01(p);
    return p;
}

Plane gen_checker(std::mt19937_64& rng, int size) {
    // Period is the cell edge in pixels. One-pixel cells are excluded: Sobel cannot see them.
    const int cell = std::uniform_int_distribution<int>(2, 8)(rng);
    const int ox = std::uniform_int_distribution<int>(0, 2 * cell - 1)(rng);
    const int oy = std::uniform_int_distribution<int>(0, 2 * cell - 1)(rng);
    const double lo = uniform(rng, 0.0, 0.3), hi = uniform(rng, 0.7, 1.0);
    Plane p(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) p(y, x) = (((x + ox) / cell + (y + oy) / cell) % 2) ? hi : lo;
    return p;
}

Plane gen_shapes(std::mt19937_64& rng, int size) {
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double base = uniform(rng, 0.3, 0.7), slope = uniform(rng, -0.3, 0.3);
    Plane p(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double u = ((x + 0.5) * std::cos(theta) + (y + 0.5) * std::sin(theta)) / size - 0.5;
            p(y, x) = clamp01(base + slope * u);
        }

    constexpr int kSuper = 4;  // 4x4 supersampling for edge coverage
    const int count = std::uniform_int_distribution<int>(3, 6)(rng);
    for (int s = 0; s < count; ++s) {
        const bool disc = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        const double cx = uniform(rng, 0.1, 0.9) * size, cy = uniform(rng, 0.1, 0.9) * size;
        const double a = uniform(rng, 0.08, 0.3) * size, b = uniform(rng, 0.08, 0.3) * size;
        const double intensity = uniform(rng, 0.0, 1.0);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                int inside = 0;
                for (int sy = 0; sy < kSuper; ++sy)
                    for (int sx = 0; sx < kSuper; ++sx) {
                        const double px = x + (sx + 0.5) / kSuper - cx, py = y + (sy + 0.5) / kSuper - cy;
                        inside += disc ? (px * px + py * py <= a * a) : (std::abs(px) <= a && std::abs(py) <= b);
                    }
                const double cov = static_cast<double>(inside) / (kSuper * kSuper);
                p(y, x) = (1.0 - cov) * p(y, x) + cov * intensity;
            }
    }
    return p;
}

double cubic_weight(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

}  // namespace

ImageKind parse_image_kind(const std::string& name) {
    if (name == "grf") return ImageKind::Grf;
    if (name == "checker") return ImageKind::Checker;
    if (name == "shapes") return ImageKind::Shapes;
    throw std::invalid_argument("unknown image kind '" + name + "' (expected grf, checker or shapes)");
}

std::string to_string(ImageKind kind) {
    switch (kind) {
        case ImageKind::Grf: return "grf";
        case ImageKind::Checker: return "checker";
        case ImageKind::Shapes: return "shapes";
    }
    return "?";
}

Tensor gen_hr(std::uint64_t seed, int size, ImageKind kind) {
    if (size != 16 && size != 32 && size != 64) throw std::invalid_argument("image size must be 16, 32 or 64");
    std::mt19937_64 rng(splitmix64(seed ^ (static_cast<std::uint64_t>(kind) << 56)));
    Plane p = kind == ImageKind::Grf ? gen_grf(rng, size)
              : kind == ImageKind::Checker ? gen_checker(rng, size)
                                           : gen_shapes(rng, size);
    for (double& x : p.v) x = clamp01(x);
    return to_tensor(p);
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
    if (sigma < 0) throw std::invalid_argument("blur sigma must be >= 0");
    return to_tensor(blur_plane(to_plane(img), sigma));
}

Tensor average_pool(const Tensor& img, int factor) {
    const Plane p = to_plane(img);
    if (factor < 1 || p.h % factor || p.w % factor)
        throw std::invalid_argument("scale " + std::to_string(factor) + " does not divide the image extent");
    Plane out(p.h / factor, p.w / factor);
    const double inv = 1.0 / (factor * factor);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double acc = 0.0;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) acc += p(y * factor + dy, x * factor + dx);
            out(y, x) = acc * inv;
        }
    return to_tensor(out);
}

Tensor bicubic_upsample(const Tensor& img, int factor) {
    if (factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
    if (factor == 1) return img.clone();
    const Plane p = to_plane(img);
    Plane out(p.h * factor, p.w * factor);
    for (int y = 0; y < out.h; ++y) {
        const double sy = (y + 0.5) / factor - 0.5;
        const int y0 = static_cast<int>(std::floor(sy));
        for (int x = 0; x < out.w; ++x) {
            const double sx = (x + 0.5) / factor - 0.5;
            const int x0 = static_cast<int>(std::floor(sx));
            double acc = 0.0;
            for (int j = -1; j <= 2; ++j) {
                const double wy = cubic_weight(sy - (y0 + j));
                const int yy = std::clamp(y0 + j, 0, p.h - 1);
                for (int i = -1; i <= 2; ++i)
                    acc += wy * cubic_weight(sx - (x0 + i)) * p(yy, std::clamp(x0 + i, 0, p.w - 1));
            }
            out(y, x) = acc;
        }
    }
    return to_tensor(out);
}

Tensor degrade(const Tensor& hr, const DegradeParams& p, std::uint64_t seed) {
    if (p.noise_sigma < 0) throw std::invalid_argument("noise sigma must be >= 0");
    const Tensor blurred = gaussian_blur(hr, p.blur_sigma);
    Tensor lr = average_pool(blurred, p.scale);
    if (p.noise_sigma > 0) {
        std::mt19937_64 rng(splitmix64(seed));
        std::normal_distribution<double> n(0.0, p.noise_sigma);
        std::vector<real> v = lr.to_vector();
        for (real& x : v) x = static_cast<real>(clamp01(x + n(rng)));
        lr = Tensor::from_vector(lr.shape(), std::move(v));
    }
    std::vector<real> up = bicubic_upsample(lr, p.scale).to_vector();
    for (real& x : up) x = static_cast<real>(clamp01(x));
    return Tensor::from_vector(hr.shape(), std::move(up));
}

std::uint64_t sample_seed(std::uint64_t global_seed, Split split, std::uint64_t index) {
    const std::uint64_t tag = split == Split::Train ? 0x7472ULL : 0x76616cULL;
    return splitmix64(splitmix64(global_seed) ^ splitmix64(tag + splitmix64(index)));
}

Sample make_sample(const DataConfig& cfg, std::uint64_t global_seed, Split split, std::uint64_t index) {
    const std::uint64_t idx = split == Split::Val ? index + kValIndexOffset : index;
    Sample s;
    s.seed = sample_seed(global_seed, split, idx);
    std::mt19937_64 rng(s.seed);
    s.kind = static_cast<ImageKind>(std::uniform_int_distribution<int>(0, 2)(rng));
    s.degrade.scale = cfg.scale;
    s.degrade.blur_sigma = uniform(rng, cfg.blur_min, cfg.blur_max);
    s.degrade.noise_sigma = uniform(rng, cfg.noise_min, cfg.noise_max);
    const std::uint64_t image_seed = rng(), noise_seed = rng();
    s.hr = gen_hr(image_seed, cfg.size, s.kind);
    s.lr = degrade(s.hr, s.degrade, noise_seed);
    return s;
}

BatchStream::BatchStream(DataConfig cfg, std::uint64_t global_seed, Split split, int batch_size)
    : cfg_(cfg), seed_(global_seed), split_(split), batch_size_(batch_size) {
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
}

Batch BatchStream::batch_at(std::uint64_t k) const {
    std::vector<Tensor> hr, lr;
    Batch b;
    for (int i = 0; i < batch_size_; ++i) {
        Sample s = make_sample(cfg_, seed_, split_, k * static_cast<std::uint64_t>(batch_size_) + i);
        hr.push_back(std::move(s.hr));
        lr.push_back(std::move(s.lr));
        b.seeds.push_back(s.seed);
    }
    b.x0 = stack_batch(hr);
    b.y0 = stack_batch(lr);
    return b;
}

Tensor stack_batch(const std::vector<Tensor>& items) {
    if (items.empty()) throw std::invalid_argument("cannot stack an empty batch");
    Shape shape = items.front().shape();
    if (shape.size() != 4 || shape[0] != 1) throw std::invalid_argument("stack_batch expects [1,C,H,W] items");
    std::vector<real> out;
    out.reserve(items.size() * static_cast<std::size_t>(items.front().numel()));
    for (const Tensor& t : items) {
        if (t.shape() != shape) throw std::invalid_argument("stack_batch: shape mismatch");
        auto d = t.data();
        out.insert(out.end(), d.begin(), d.end());
    }
    shape[0] = static_cast<std::int64_t>(items.size());
    return Tensor::from_vector(shape, std::move(out));
}

Tensor batch_item(const Tensor& batch, std::int64_t i) {
    if (batch.rank() != 4 || i < 0 || i >= batch.dim(0)) throw std::out_of_range("batch_item index out of range");
    const std::int64_t per = batch.numel() / batch.dim(0);
    auto d = batch.data();
    std::vector<real> v(d.begin() + i * per, d.begin() + (i + 1) * per);
    return Tensor::from_vector({1, batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(v));
}

double sobel_energy(const Tensor& img) {
    // Interior positions only: the border row and column would measure the step to the zero padding.
    const Tensor s = sobel(img);
    const std::int64_t n = s.dim(0), c = s.dim(1), h = s.dim(2), w = s.dim(3);
    const auto d = s.data();
    double acc = 0.0;
    for (std::int64_t p = 0; p < n * c; ++p)
        for (std::int64_t y = 1; y + 1 < h; ++y)
            for (std::int64_t x = 1; x + 1 < w; ++x) acc += std::abs(static_cast<double>(d[(p * h + y) * w + x]));
    return acc;
}

}  // namespace gtasr
