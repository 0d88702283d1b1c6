#pragma once

#include <cstdint>
#include <random>

namespace hspde {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of the stream (replica, stream) under a master seed. Streams are
/// derived from counters, never from generator state, so any subset of
/// replicas can be produced in any order or on any thread.
constexpr std::uint64_t derive_stream_seed(std::uint64_t master, std::uint64_t replica,
                                           std::uint64_t stream) noexcept {
    return splitmix64(splitmix64(splitmix64(master) ^ replica) + 0xD1B54A32D192ED03ULL * (stream + 1));
}

/// Standard normal draws from one derived stream.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}
    GaussianStream(std::uint64_t master, std::uint64_t replica, std::uint64_t stream)
        : engine_(derive_stream_seed(master, replica, stream)) {}

    double operator()() { return normal_(engine_); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

} // namespace hspde
