#pragma once

#include <cstdint>
#include <string_view>

namespace lcmkit {

// Counter-based random stream: the value of draw i depends only on
// (seed, counter + i), so a stream can be replayed, skipped, or handed to
// another thread without shared state. Substreams are derived by name.
class RngStream {
public:
    RngStream() = default;
    explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
        : seed_(seed), counter_(counter) {}

    // Independent substream keyed by (seed, tag); does not consume from this stream.
    RngStream split(std::string_view tag) const;
    RngStream split(std::uint64_t tag) const;

    std::uint64_t next_u64();

    // Uniform on [0, 1).
    double uniform();
    // Uniform on [lo, hi).
    double uniform(double lo, double hi);
    // Uniform integer on [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    // Standard normal pair via Box-Muller; consumes exactly two u64 draws.
    void normal_pair(double& z0, double& z1);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

// SplitMix64 finalizer; used for both stream output and tag hashing.
std::uint64_t mix64(std::uint64_t x);

std::uint64_t hash_tag(std::string_view tag);

}  // namespace lcmkit
