#pragma once

#include <filesystem>

#include "gtasr/tensor.hpp"

namespace gtasr {

/// Binary PGM (P5, maxval 255). Values are clipped to [0,1] and rounded to 8 bits.
void write_pgm(const std::filesystem::path& path, const Tensor& img);
/// Reads any P5 file with maxval <= 255 into a [1,1,H,W] tensor scaled to [0,1].
Tensor read_pgm(const std::filesystem::path& path);

}  // namespace gtasr
