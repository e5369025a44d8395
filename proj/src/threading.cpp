#include "capnet/threading.hpp"

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace capnet {

std::size_t worker_count() {
    const char* env = std::getenv("CAPNET_THREADS");
    if (!env || *env == '\0') return 1;
    long n = std::strtol(env, nullptr, 10);
    if (n <= 1) return 1;
    return static_cast<std::size_t>(n);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(worker_count(), n == 0 ? std::size_t{1} : n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn]() {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace capnet
