#include "gtasr/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gtasr/losses.hpp"

namespace gtasr {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

double l1_mean_diff(const Tensor& a, const Tensor& b) {
    auto da = a.data(), db = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) acc += std::abs(static_cast<double>(da[i]) - db[i]);
    return acc / static_cast<double>(da.size());
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Single-image SSIM over valid window positions.
double ssim_plane(const real* a, const real* b, int h, int w) {
    constexpr int R = 3;  // 7x7 window
    constexpr double sigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double win[2 * R + 1][2 * R + 1];
    double total = 0.0;
    for (int i = -R; i <= R; ++i)
        for (int j = -R; j <= R; ++j) total += win[i + R][j + R] = std::exp(-(i * i + j * j) / (2 * sigma * sigma));
    for (auto& row : win)
        for (double& v : row) v /= total;

    double acc = 0.0;
    int count = 0;
    for (int y = R; y < h - R; ++y)
        for (int x = R; x < w - R; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = -R; i <= R; ++i)
                for (int j = -R; j <= R; ++j) {
                    const double g = win[i + R][j + R];
                    const double va = a[(y + i) * w + x + j], vb = b[(y + i) * w + x + j];
                    ma += g * va;
                    mb += g * vb;
                    saa += g * va * va;
                    sbb += g * vb * vb;
                    sab += g * va * vb;
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            acc += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            ++count;
        }
    return acc / count;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    auto da = a.data(), db = b.data();
    double mse = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = static_cast<double>(da[i]) - db[i];
        mse += d * d;
    }
    mse /= static_cast<double>(da.size());
    if (mse == 0.0) return kPsnrSentinel;
    return std::min(kPsnrSentinel, 10.0 * std::log10(1.0 / mse));
}

double batch_psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    if (a.rank() != 4) return psnr(a, b);
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.dim(0); ++i) acc += psnr(batch_item(a, i), batch_item(b, i));
    return acc / static_cast<double>(a.dim(0));
}

double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    if (a.rank() != 4 || a.dim(1) != 1) throw std::invalid_argument("ssim expects [N,1,H,W] images");
    const int h = static_cast<int>(a.dim(2)), w = static_cast<int>(a.dim(3));
    if (h < 7 || w < 7) throw std::invalid_argument("ssim: image smaller than the 7x7 window");
    const auto per = static_cast<std::size_t>(h) * w;
    double acc = 0.0;
    for (std::int64_t n = 0; n < a.dim(0); ++n)
        acc += ssim_plane(a.data().data() + n * per, b.data().data() + n * per, h, w);
    return acc / static_cast<double>(a.dim(0));
}

std::vector<ConsistencyRecord> consistency_probe(const Predictor& f, const Tensor& x0, const Tensor& y0,
                                                 const NoiseSchedule& schedule, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Tensor eps = Tensor::randn(x0.shape(), rng);
    std::vector<ConsistencyRecord> out;
    for (int t = 1; t <= schedule.total_steps; ++t) {
        const Tensor x_t = forward_project(schedule, x0, y0, t, eps);
        ConsistencyRecord r;
        r.t = t;
        r.prediction = stop_gradient(f(x_t, y0, t));
        r.psnr = batch_psnr(r.prediction, x0);
        out.push_back(std::move(r));
    }
    return out;
}

DecouplingSample decoupling_sample(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0,
                                   const Tensor& y0, int t_prime, const Tensor& noise,
                                   const NoiseSchedule& schedule) {
    const TargetEndpoints e = target_endpoints(target, x0_hat, x0, y0, t_prime, noise, schedule);
    DecouplingSample s;
    s.t_prime = t_prime;
    s.pixel_mae = l1_mean_diff(e.fake, e.real_state);
    s.structural_mae = l1_mean_diff(sobel(e.fake), sobel(e.real_state));
    return s;
}

std::vector<DecouplingSample> decoupling_scatter(const PredictorNet& target, const PredictorNet& online,
                                                 const DecouplingOptions& opt) {
    if (opt.count < 0) throw std::invalid_argument("decoupling probe count must be >= 0");
    const int T = opt.schedule.total_steps;
    std::vector<DecouplingSample> out;
    out.reserve(static_cast<std::size_t>(opt.count));
    for (int i = 0; i < opt.count; ++i) {
        const auto index = static_cast<std::uint64_t>(i);
        const Sample s = make_sample(opt.data, opt.seed, Split::Val, index);
        std::mt19937_64 rng(mix(opt.seed, index));
        const int t_prime = opt.t_prime > 0 ? opt.t_prime : std::uniform_int_distribution<int>(1, T)(rng);
        const Tensor start = add(s.lr, Tensor::randn(s.lr.shape(), rng));
        const Tensor x0_hat = predict_frozen(online, start, s.lr, T, T);
        const Tensor noise = Tensor::randn(s.hr.shape(), rng);
        DecouplingSample d = decoupling_sample(target, x0_hat, s.hr, s.lr, t_prime, noise, opt.schedule);
        d.instance = index;
        out.push_back(d);
    }
    return out;
}

double triangle_slack(const PredictorNet& target, const Tensor& x0_hat, const Tensor& x0, const Tensor& y0,
                      int t_prime, const Tensor& noise, const NoiseSchedule& schedule) {
    const TargetEndpoints e = target_endpoints(target, x0_hat, x0, y0, t_prime, noise, schedule);
    const Tensor s_fake = sobel(e.fake), s_real = sobel(e.real_state), s_x0 = sobel(x0);
    const double lhs = l1_mean_diff(s_fake, s_x0);
    const double term1 = l1_mean_diff(s_fake, s_real);
    const double term2 = l1_mean_diff(s_real, s_x0);
    return term1 + term2 - lhs;
}

double mean_structural_mae(const std::vector<DecouplingSample>& samples) {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& s : samples) acc += s.structural_mae;
    return acc / static_cast<double>(samples.size());
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string consistency_csv(const std::vector<ConsistencyRecord>& records) {
    std::string out = "t,psnr_db,prediction_mean\n";
    for (const auto& r : records) {
        double m = 0.0;
        for (real v : r.prediction.data()) m += v;
        m /= static_cast<double>(r.prediction.numel());
        out += std::to_string(r.t) + "," + format_number(r.psnr) + "," + format_number(m) + "\n";
    }
    return out;
}

std::string decoupling_csv(const std::vector<DecouplingSample>& samples) {
    std::string out = "instance,t_prime,pixel_mae,structural_mae\n";
    for (const auto& s : samples)
        out += std::to_string(s.instance) + "," + std::to_string(s.t_prime) + "," + format_number(s.pixel_mae) + "," +
               format_number(s.structural_mae) + "\n";
    return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace gtasr
