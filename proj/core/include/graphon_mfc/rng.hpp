#pragma once

#include <cstdint>

namespace gmfc {

// Counter-based generator: every draw is a pure function of
// (seed, label, stream, step, slot). Streams never carry state, so
// simulations are reproducible bit-for-bit at any thread count and
// two runs sharing a seed are synchronously coupled by construction.
namespace rng {

inline constexpr std::uint64_t kNoiseDomain = 0x9e3779b97f4a7c15ull;
inline constexpr std::uint64_t kInitDomain = 0xd1b54a32d192ed03ull;
inline constexpr std::uint64_t kProbeDomain = 0x8cb92ba72f3d8dd7ull;

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t domain,
                                  std::uint64_t label, std::uint64_t stream,
                                  std::uint64_t step, std::uint64_t slot) {
    std::uint64_t h = mix64(seed ^ domain);
    h = mix64(h ^ (label * 0xff51afd7ed558ccdull));
    h = mix64(h ^ (stream * 0xc4ceb9fe1a85ec53ull));
    h = mix64(h ^ (step * 0x2545f4914f6cdd1dull));
    h = mix64(h ^ slot);
    return h;
}

// Uniform in the open interval (0,1); 53-bit mantissa, never 0 or 1.
inline double uniform_open(std::uint64_t seed, std::uint64_t domain,
                           std::uint64_t label, std::uint64_t stream,
                           std::uint64_t step, std::uint64_t slot) {
    const std::uint64_t h =
        counter_hash(seed, domain, label, stream, step, slot);
    return static_cast<double>(h >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

// Inverse of the standard normal CDF, Wichura's AS 241 (PPND16),
// accurate to ~1e-16 over (0,1).
double normal_quantile(double p);

inline double normal(std::uint64_t seed, std::uint64_t domain,
                     std::uint64_t label, std::uint64_t stream,
                     std::uint64_t step, std::uint64_t slot) {
    return normal_quantile(uniform_open(seed, domain, label, stream, step, slot));
}

}  // namespace rng
}  // namespace gmfc
