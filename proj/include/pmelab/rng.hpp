#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace pmelab {

/// splitmix64: seed expander and string hasher.
///
/// Used only to initialize Xoshiro256pp states and to derive named
/// substreams; kept separate so the seeding procedure is reproducible
/// from the algorithm's published reference outputs.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// xoshiro256++ generator.
///
/// All randomness in the project flows from one root seed through named
/// splits, so identical configs reproduce identical runs bit for bit.
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& s : state_) s = sm.next();
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1), 53 mantissa bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo is fine here: n is tiny compared to 2^64
        // and bias below 2^-50 is irrelevant for test-instance generation.
        return next() % n;
    }

    /// Derive an independent, reproducible substream from a label.
    /// The label is hashed together with fresh output of this stream's
    /// seed material, so split("a") and split("b") never collide.
    Xoshiro256pp split(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : label) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        SplitMix64 sm(h ^ state_[0] ^ rotl(state_[2], 31));
        return Xoshiro256pp(sm.next());
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
};

} // namespace pmelab
