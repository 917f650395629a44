#pragma once
// Reproducible random streams: every trial gets its own engine whose seed is
// derived from (master seed, stream index) by SplitMix64 mixing, so results
// do not depend on how trials are scheduled across threads.

#include <cstdint>
#include <random>

namespace sheq {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    static Rng stream(std::uint64_t master, std::uint64_t index) { return Rng(stream_seed(master, index)); }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Well-known stream offsets so that suites never share streams.
namespace streams {
inline constexpr std::uint64_t kMoments = 0x1000'0000ULL;
inline constexpr std::uint64_t kCoupled = 0x2000'0000ULL;
inline constexpr std::uint64_t kLawQ = 0x3000'0000ULL;
inline constexpr std::uint64_t kLawP = 0x4000'0000ULL;
inline constexpr std::uint64_t kSimulate = 0x5000'0000ULL;
inline constexpr std::uint64_t kMisc = 0x6000'0000ULL;
}  // namespace streams

}  // namespace sheq
