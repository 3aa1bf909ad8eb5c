#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtasr {

/// One named float32 array inside a checkpoint.
struct NamedArray {
    std::string name;
    std::vector<std::uint32_t> extents;
    std::vector<float> values;

    bool operator==(const NamedArray&) const = default;
};

/// Binary checkpoint, little-endian throughout:
///   "GTCK" | u32 version (=1) | u32 array count
///   per array: u16 name length | UTF-8 name | u8 rank | u32 extents[rank] | f32 values
///   u32 iteration | u8 stage
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::vector<NamedArray> arrays;
    std::uint32_t iteration = 0;
    std::uint8_t stage = 0;

    const NamedArray* find(const std::string& name) const;
    bool operator==(const Checkpoint&) const = default;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gtasr
