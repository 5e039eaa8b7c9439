#pragma once

#include <array>
#include <cstdint>

namespace headgan {

/// xoshiro256** generator with splitmix64 seeding.
/// Self-contained so that sequences are identical across compilers, and the
/// full state is four words, which makes checkpointing it trivial.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

    /// Uniform double in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. Always consumes two uniforms and
    /// discards the second variate, so the state never carries a cache.
    double normal();
    float normalf(float stddev) { return static_cast<float>(normal()) * stddev; }

    /// Uniform integer in [0, n). n must be positive.
    int uniform_int(int n);

    std::array<std::uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

    /// Derive an independent stream, e.g. one per worker lane.
    Rng fork(std::uint64_t stream_id);

private:
    std::array<std::uint64_t, 4> s_{};
};

}  // namespace headgan
