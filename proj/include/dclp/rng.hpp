#pragma once

#include <array>
#include <cstdint>

namespace dclp {

/// xoshiro256** seeded through splitmix64.
///
/// All derived draws are defined here rather than through <random>
/// distributions, whose output is implementation-defined, so a seed produces
/// the same stream on every platform:
///   uniform()  = (next() >> 11) * 2^-53, in [0, 1)
///   normal()   = Box-Muller cosine branch from two uniforms, u1 mapped to (0, 1]
///   below(n)   = Lemire multiply-shift with rejection
class Rng {
public:
    using State = std::array<std::uint64_t, 4>;

    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next();
    double uniform();
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    const State& state() const noexcept { return state_; }
    void set_state(const State& s) noexcept { state_ = s; }

    friend bool operator==(const Rng& a, const Rng& b) { return a.state_ == b.state_; }

private:
    State state_{};
};

}  // namespace dclp
