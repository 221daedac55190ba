#pragma once
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

// Seeded, platform-stable randomness. std:: distributions are implementation
// defined, so every draw here is spelled out explicitly: two builds on two
// platforms given the same seed must produce bit-identical streams.

namespace blade {

struct SplitMix64 {
    uint64_t state;
    explicit SplitMix64(uint64_t s) : state(s) {}
    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
};

// FNV-1a, used to turn stream names ("train", "noise", ...) into seed salts.
constexpr uint64_t hash_tag(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Folds all parts into one derived seed. This is the seed chain used across
// the project: seed_mix({task_seed, client_id, round, hash_tag("train")}).
inline uint64_t seed_mix(std::initializer_list<uint64_t> parts) {
    uint64_t acc = 0x243f6a8885a308d3ull;
    for (uint64_t p : parts) {
        SplitMix64 sm(acc ^ (p + 0x9e3779b97f4a7c15ull));
        acc = sm.next();
    }
    SplitMix64 fin(acc);
    return fin.next();
}

// xoshiro256** with splitmix64 seeding.
class Rng {
  public:
    explicit Rng(uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& w : s_) w = sm.next();
        has_spare_ = false;
        spare_ = 0.0;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1) with 53 bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // unbiased integer in [0,n)
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // standard normal, Box-Muller (trigonometric form, one spare cached)
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - next_double(); // (0,1], keeps log finite
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Laplace with scale b (variance 2b^2), inverse CDF
    double laplace(double scale) {
        const double u = next_double() - 0.5;
        const double mag = std::log(1.0 - 2.0 * std::fabs(u)); // <= 0
        return u >= 0.0 ? -scale * mag : scale * mag;
    }

    // exponential with given mean
    double exponential(double mean) { return -mean * std::log(1.0 - next_double()); }

    // Fisher-Yates over [0,n) index array
    template <typename Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            auto tmp = v[i - 1];
            v[i - 1] = v[j];
            v[j] = tmp;
        }
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
    double spare_;
    bool has_spare_;
};

} // namespace blade
