#pragma once

#include <cstdint>

namespace biphoton {

// Counter-keyed SplitMix64 streams.
//
// Every random draw in the simulator is tied to a (master seed, purpose,
// event index) triple, never to how many events some earlier call consumed.
// That makes chunked generation trivially identical to one-shot generation:
// event k gets the same stream no matter which batch it lands in.

inline uint64_t splitmix64_next(uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// One round of the SplitMix64 output mix (a bijective finalizer).
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Distinct salts keep the per-purpose streams independent even for equal
// event indexes.
enum class StreamPurpose : uint64_t {
    PairDelay = 0x70616972ull,    // coincidence delay draws
    StartTimes = 0x73746172ull,   // absolute start tags
    SweepPoint = 0x73776565ull,   // per-phase-point seeds in a sweep
};

struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next_u64() { return splitmix64_next(state); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via the inverse CDF (Acklam's rational approximation,
    // |relative error| < 1.15e-9).  One uniform per normal keeps the draw
    // count per event fixed.
    double normal();
};

// Stream seed for one event: master and index are separately mixed so that
// neighboring indexes land in unrelated states.
inline uint64_t stream_seed(uint64_t master, StreamPurpose purpose, uint64_t index) {
    uint64_t k = mix64(index * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(purpose));
    return mix64(master ^ k);
}

inline Rng event_rng(uint64_t master, StreamPurpose purpose, uint64_t index) {
    return Rng(stream_seed(master, purpose, index));
}

}  // namespace biphoton
