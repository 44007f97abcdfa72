#include "lcmkit/rng.hpp"

#include <cmath>

namespace lcmkit {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_tag(std::string_view tag) {
    // FNV-1a 64-bit
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

RngStream RngStream::split(std::string_view tag) const {
    return split(hash_tag(tag));
}

RngStream RngStream::split(std::uint64_t tag) const {
    // Child identity depends on (seed, tag) only, not on how much the parent
    // stream has been consumed.
    return RngStream(mix64(mix64(seed_) ^ mix64(tag ^ 0xD1B54A32D192ED03ULL)));
}

std::uint64_t RngStream::next_u64() {
    return mix64(seed_ ^ mix64(counter_++ * 0xA0761D6478BD642FULL + 0xE7037ED1A0B428DBULL));
}

double RngStream::uniform() {
    // 53-bit mantissa in [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
}

void RngStream::normal_pair(double& z0, double& z1) {
    // u1 in (0, 1] so the log is finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    z0 = r * std::cos(a);
    z1 = r * std::sin(a);
}

}  // namespace lcmkit
