#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "edq/math.hpp"

namespace edq {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Splittable stream keyed by (seed, stream, substream): reproducible regardless
// of thread scheduling, with documented uniform/exponential/normal transforms
// so results are bit-identical across platforms.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0) {
        key_ = mix64(mix64(mix64(seed) ^ mix64(stream ^ 0x517cc1b727220a95ull)) ^
                     mix64(substream ^ 0x6c62272e07bb0142ull));
        std::seed_seq ss{std::uint32_t(key_),       std::uint32_t(key_ >> 32),
                         std::uint32_t(~key_),      std::uint32_t(~key_ >> 32),
                         std::uint32_t(0x2545f491), std::uint32_t(0x4f6cdd1d)};
        eng_.seed(ss);
    }

    RandomStream split(std::uint64_t child) const {
        RandomStream s(key_, 0xa0761d6478bd642full, child);
        return s;
    }

    std::uint64_t bits() { return eng_(); }

    // uniform on [0,1) with 53-bit resolution
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    double normal() {
        double u1 = 1.0 - uniform();  // in (0,1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    double lognormal(double location, double scale) { return std::exp(location + scale * normal()); }

    double erlang(int shape, double rate) {
        double s = 0.0;
        for (int i = 0; i < shape; ++i) s += exponential(rate);
        return s;
    }

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::mt19937_64 eng_;
};

}  // namespace edq
