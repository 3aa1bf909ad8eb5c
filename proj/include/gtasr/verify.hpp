#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gtasr {

struct VerifyEntry {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct VerifyOptions {
    std::uint64_t seed = 42;
    /// Replaces the Sobel stencil with a perturbed one (for testing the harness itself).
    bool corrupt_sobel = false;
    bool include_gradients = true;
};

struct VerifyReport {
    std::vector<VerifyEntry> entries;

    bool passed() const;
    const VerifyEntry* find(const std::string& name) const;
    /// One `PASS|FAIL name: detail` line per check plus a closing tally.
    std::string text() const;
};

VerifyReport verify_math(const VerifyOptions& opts = {});

}  // namespace gtasr
