#pragma once

// Counter-based random streams keyed by (master seed, trajectory, purpose).
// Each draw is splitmix64 applied to key + counter * gamma, so streams are
// reproducible regardless of which worker consumes them or in which order.

#include <cstdint>
#include <limits>
#include <random>

#include "nuhops/core.hpp"

namespace nuhops {

enum class StreamPurpose : std::uint64_t {
    noise = 0x6e6f697365ULL,
    thermal = 0x746865726dULL,
    initial = 0x696e6974ULL,
};

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class KeyedStream {
public:
    using result_type = std::uint64_t;

    KeyedStream(std::uint64_t master_seed, std::uint64_t index, StreamPurpose purpose,
                std::uint64_t attempt = 0)
        : key_(mix64(mix64(mix64(master_seed ^ 0x9e3779b97f4a7c15ULL) ^ index) ^
                     static_cast<std::uint64_t>(purpose)) ^
               mix64(attempt + 0x632be59bd9b4e019ULL)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Circularly-symmetric complex Gaussian with E|x|^2 = 1.
class ComplexNormal {
public:
    template <class Rng>
    cplx operator()(Rng& rng) {
        const double re = dist_(rng);
        const double im = dist_(rng);
        return {re * M_SQRT1_2, im * M_SQRT1_2};
    }

private:
    std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace nuhops
