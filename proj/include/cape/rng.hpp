#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace cape {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3"). Stateless: the output is a pure function of counter
/// and key.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;
    static Counter block(Counter counter, Key key);
};

/// Named RNG streams. Every random decision in the engine draws from exactly
/// one of these, so adding draws to one stream never shifts another.
enum class Stream : std::uint32_t {
    truth = 1,
    prior = 2,
    oracle = 3,
    policy = 4,
    resample = 5,
    rejuvenate = 6,
    scratch = 7,
};

std::string_view stream_name(Stream s);

inline constexpr std::string_view rng_version = "philox4x32-10/v1";

/// A single counter-based substream: (seed, stream, a, b) identify it and an
/// internal 32-bit draw index walks it. Two generators built from the same
/// identity produce identical sequences regardless of thread scheduling.
class StreamRng {
public:
    using result_type = std::uint64_t;

    StreamRng(std::uint64_t seed, Stream stream, std::uint32_t a = 0, std::uint32_t b = 0);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n);
    /// Standard normal via Box-Muller.
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::span<T> xs) {
        for (std::size_t i = xs.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(xs[i - 1], xs[j]);
        }
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return next_u64(); }

private:
    void refill();

    Philox4x32::Key key_;
    Philox4x32::Counter counter_;
    std::array<std::uint32_t, 4> buffer_{};
    int buffered_ = 0;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

/// Hands out substreams for a fixed master seed.
class RngFactory {
public:
    explicit RngFactory(std::uint64_t seed) : seed_(seed) {}
    StreamRng stream(Stream s, std::uint32_t a = 0, std::uint32_t b = 0) const {
        return StreamRng(seed_, s, a, b);
    }
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

}  // namespace cape
