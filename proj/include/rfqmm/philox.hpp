#pragma once

// Philox4x32-10 counter-based random bits (Salmon et al., SC'11 family).
//
// The generator is a pure function of (counter, key): streams never carry
// state, so an event draw is addressed directly by (seed, path, event) and
// any path can be replayed or generated in parallel with bit-identical
// results regardless of scheduling.

#include <array>
#include <cstdint>

namespace rfqmm {

/// One 128-bit block of the 10-round Philox4x32 network.
inline std::array<std::uint32_t, 4> philox4x32(
    std::array<std::uint32_t, 4> counter,
    std::array<std::uint32_t, 2> key) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round) {
            key[0] += 0x9E3779B9u;  // Weyl increments
            key[1] += 0xBB67AE85u;
        }
        const std::uint64_t p0 = std::uint64_t(0xD2511F53u) * counter[0];
        const std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * counter[2];
        counter = {static_cast<std::uint32_t>(p1 >> 32) ^ counter[1] ^ key[0],
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ counter[3] ^ key[1],
                   static_cast<std::uint32_t>(p0)};
    }
    return counter;
}

/// Map 32 random bits to the open interval (0,1).
inline double uniform01(std::uint32_t bits) noexcept {
    return (static_cast<double>(bits) + 0.5) * 0x1p-32;
}

/// The four uniforms consumed by one candidate event of one path.
struct EventDraws {
    double u[4];
};

inline EventDraws event_draws(std::uint64_t seed, std::uint64_t path,
                              std::uint64_t event) noexcept {
    const std::array<std::uint32_t, 4> bits = philox4x32(
        {static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
         static_cast<std::uint32_t>(event),
         static_cast<std::uint32_t>(event >> 32)},
        {static_cast<std::uint32_t>(seed),
         static_cast<std::uint32_t>(seed >> 32)});
    return {{uniform01(bits[0]), uniform01(bits[1]), uniform01(bits[2]),
             uniform01(bits[3])}};
}

}  // namespace rfqmm
