#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace mtlinear {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Variant { linear, nlinear, dlinear, rlinear };

inline std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::linear: return "linear";
        case Variant::nlinear: return "nlinear";
        case Variant::dlinear: return "dlinear";
        case Variant::rlinear: return "rlinear";
    }
    return "unknown";
}

inline Variant parse_variant(std::string_view name) {
    if (name == "linear") return Variant::linear;
    if (name == "nlinear") return Variant::nlinear;
    if (name == "dlinear") return Variant::dlinear;
    if (name == "rlinear") return Variant::rlinear;
    throw Error("unknown model variant '" + std::string(name) + "'");
}

/// SplitMix64 finalizer; used to derive independent per-head / per-epoch seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is rethrown.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> workers;
        workers.reserve(jobs);
        for (std::size_t t = 0; t < jobs; ++t) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

inline std::size_t default_jobs() {
    return std::max(1u, std::thread::hardware_concurrency());
}

} // namespace mtlinear
