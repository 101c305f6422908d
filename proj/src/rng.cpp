#include "cape/rng.hpp"

#include <cmath>
#include <numbers>

namespace cape {

namespace {

constexpr std::uint32_t philox_m0 = 0xD2511F53u;
constexpr std::uint32_t philox_m1 = 0xCD9E8D57u;
constexpr std::uint32_t philox_w0 = 0x9E3779B9u;
constexpr std::uint32_t philox_w1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(product >> 32);
    lo = static_cast<std::uint32_t>(product);
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter c, Key k) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(philox_m0, c[0], hi0, lo0);
        mulhilo(philox_m1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += philox_w0;
        k[1] += philox_w1;
    }
    return c;
}

std::string_view stream_name(Stream s) {
    switch (s) {
        case Stream::truth: return "truth";
        case Stream::prior: return "prior";
        case Stream::oracle: return "oracle";
        case Stream::policy: return "policy";
        case Stream::resample: return "resample";
        case Stream::rejuvenate: return "rejuvenate";
        case Stream::scratch: return "scratch";
    }
    return "unknown";
}

// Counter layout: [draw index, b, a, stream]. The draw index is the only word
// that advances, so 2^32 blocks (2^33 u64 draws) per substream.
StreamRng::StreamRng(std::uint64_t seed, Stream stream, std::uint32_t a, std::uint32_t b)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      counter_{0u, b, a, static_cast<std::uint32_t>(stream)} {}

void StreamRng::refill() {
    buffer_ = Philox4x32::block(counter_, key_);
    ++counter_[0];
    buffered_ = 4;
}

std::uint64_t StreamRng::next_u64() {
    if (buffered_ < 2) refill();
    const std::uint64_t hi = buffer_[4 - buffered_];
    const std::uint64_t lo = buffer_[5 - buffered_];
    buffered_ -= 2;
    return (hi << 32) | lo;
}

double StreamRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double StreamRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::size_t StreamRng::below(std::size_t n) {
    // Lemire's nearly-divisionless rejection; unbiased.
    const std::uint64_t range = n;
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * range;
    std::uint64_t low = static_cast<std::uint64_t>(m);
    if (low < range) {
        const std::uint64_t threshold = (0 - range) % range;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * range;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::size_t>(m >> 64);
}

double StreamRng::normal() {
    if (has_spare_normal_) {
        has_spare_normal_ = false;
        return spare_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_normal_ = true;
    return radius * std::cos(angle);
}

}  // namespace cape
