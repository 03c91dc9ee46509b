#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace tcbsde {

// Philox 4x32-10 counter-based generator (Salmon et al., SC'11).
// Stateless: every 128-bit counter block maps to 4 independent 32-bit words,
// so draws keyed by (seed, path, step) are reproducible under any scheduling.
struct Philox4x32 {
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;

    static std::array<std::uint32_t, 4> block(std::uint64_t key,
                                              std::uint64_t counter_hi,
                                              std::uint64_t counter_lo) {
        std::uint32_t c0 = static_cast<std::uint32_t>(counter_lo);
        std::uint32_t c1 = static_cast<std::uint32_t>(counter_lo >> 32);
        std::uint32_t c2 = static_cast<std::uint32_t>(counter_hi);
        std::uint32_t c3 = static_cast<std::uint32_t>(counter_hi >> 32);
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c0;
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c2;
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            c0 = hi1 ^ c1 ^ k0;
            c1 = lo1;
            c2 = hi0 ^ c3 ^ k1;
            c3 = lo0;
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return {c0, c1, c2, c3};
    }
};

// Maps 64 random bits to a uniform in the open interval (0, 1).
inline double uniform_from_bits(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal draw addressed by (seed, path, step): one Philox block,
// Box-Muller cosine branch. Bit-identical for a given address everywhere.
inline double gaussian_at(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    const auto w = Philox4x32::block(seed, path, step);
    const std::uint64_t a = (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
    const std::uint64_t b = (static_cast<std::uint64_t>(w[2]) << 32) | w[3];
    const double u1 = uniform_from_bits(a);
    const double u2 = uniform_from_bits(b);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace tcbsde
