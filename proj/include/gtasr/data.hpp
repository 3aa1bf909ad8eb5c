#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtasr/tensor.hpp"

namespace gtasr {

enum class ImageKind { Grf, Checker, Shapes };

ImageKind parse_image_kind(const std::string& name);
std::string to_string(ImageKind kind);

struct DegradeParams {
    double blur_sigma = 1.0;  // Gaussian std in pixels
    int scale = 4;            // downsample factor
    double noise_sigma = 0.0; // additive Gaussian std in [0,1] units
};

/// Synthetic high-resolution image of shape [1,1,size,size] with values in [0,1].
/// size must be 16, 32 or 64.
Tensor gen_hr(std::uint64_t seed, int size, ImageKind kind);

/// Separable Gaussian blur with kernel radius ceil(3*sigma) and symmetric (mirrored) borders.
Tensor gaussian_blur(const Tensor& img, double sigma);
Tensor average_pool(const Tensor& img, int factor);
/// Keys bicubic (a = -0.5) with pixel-centre alignment and clamped borders.
Tensor bicubic_upsample(const Tensor& img, int factor);

/// blur -> average-pool by scale -> add clipped noise -> bicubic back to the input size -> clip.
Tensor degrade(const Tensor& hr, const DegradeParams& p, std::uint64_t seed);

struct DataConfig {
    int size = 32;
    int scale = 4;
    double blur_min = 0.5;
    double blur_max = 1.5;
    double noise_min = 0.01;
    double noise_max = 0.05;
};

enum class Split { Train, Val };

/// Per-sample seed derived from (global seed, split, index).
std::uint64_t sample_seed(std::uint64_t global_seed, Split split, std::uint64_t index);

/// First index of the validation range; training indices stay below it.
inline constexpr std::uint64_t kValIndexOffset = std::uint64_t{1} << 40;

struct Sample {
    Tensor hr;   // x0
    Tensor lr;   // y0 at HR resolution
    ImageKind kind = ImageKind::Grf;
    DegradeParams degrade;
    std::uint64_t seed = 0;
};

Sample make_sample(const DataConfig& cfg, std::uint64_t global_seed, Split split, std::uint64_t index);

struct Batch {
    Tensor x0;  // [B,1,S,S]
    Tensor y0;  // [B,1,S,S]
    std::vector<std::uint64_t> seeds;
};

/// Deterministic batch source. Batch k of the train split holds samples k*B .. k*B+B-1;
/// the validation split holds indices offset by kValIndexOffset.
class BatchStream {
public:
    BatchStream(DataConfig cfg, std::uint64_t global_seed, Split split, int batch_size);

    Batch batch_at(std::uint64_t k) const;
    Batch next() { return batch_at(cursor_++); }
    void reset() { cursor_ = 0; }

private:
    DataConfig cfg_;
    std::uint64_t seed_;
    Split split_;
    int batch_size_;
    std::uint64_t cursor_ = 0;
};

/// Stacks [1,C,H,W] tensors into one batch.
Tensor stack_batch(const std::vector<Tensor>& items);
/// Slice of sample i of a batch as a [1,C,H,W] tensor.
Tensor batch_item(const Tensor& batch, std::int64_t i);

/// Sum of |Sobel| responses over interior pixels, the structural energy used in tests.
double sobel_energy(const Tensor& img);

}  // namespace gtasr
