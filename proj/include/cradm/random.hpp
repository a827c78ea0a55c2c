#pragma once

#include <cstdint>
#include <random>

namespace cradm {

/// Seeded random stream with deterministic, draw-independent derivation of
/// child streams.
///
/// A stream is identified by a 64-bit key.  `derive(tag)` mixes the key with
/// the tag through `std::seed_seq`, so the child depends only on the parent's
/// key and never on how many numbers the parent already produced.  This is
/// what lets the simulator keep the channel, completion and policy draws on
/// separate sample paths.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t key = 0) : key_(key), engine_(key) {}

    std::uint64_t key() const { return key_; }

    RandomStream derive(std::uint64_t tag) const {
        std::seed_seq seq{static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32),
                          static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
        std::uint32_t out[2];
        seq.generate(out, out + 2);
        return RandomStream((static_cast<std::uint64_t>(out[1]) << 32) | out[0]);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t key_;
    std::mt19937_64 engine_;
};

// Sub-stream tags used by the simulator and the experiment runner.
namespace stream_tag {
inline constexpr std::uint64_t channel = 0x43484e4cULL;
inline constexpr std::uint64_t completion = 0x434d504cULL;
inline constexpr std::uint64_t policy = 0x504f4c59ULL;
inline constexpr std::uint64_t pilot = 0x50494c54ULL;
inline constexpr std::uint64_t boundary = 0x424e4459ULL;
inline constexpr std::uint64_t curve = 0x43525645ULL;
} // namespace stream_tag

} // namespace cradm
