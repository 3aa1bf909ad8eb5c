#include "parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace gtasr::parallel {

int thread_count() {
    static const int count = [] {
        int requested = 0;
        if (const char* env = std::getenv("GTASR_THREADS")) {
            try {
                requested = std::stoi(env);
            } catch (...) {
                requested = 0;
            }
        }
        if (requested <= 0) {
            requested = static_cast<int>(std::thread::hardware_concurrency());
        }
        return std::max(1, requested);
    }();
    return count;
}

void for_each_index(std::int64_t n, const std::function<void(std::int64_t)>& body) {
    const int workers = static_cast<int>(std::min<std::int64_t>(thread_count(), n));
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::int64_t i = w; i < n; i += workers) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace gtasr::parallel
