#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace ontotrain {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Combine a seed with salts into a fresh, well-mixed seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = seed;
    std::uint64_t h = splitmix64(s);
    s = h ^ (a * 0xff51afd7ed558ccdULL);
    h = splitmix64(s);
    s = h ^ (b * 0xc4ceb9fe1a85ec53ULL);
    return splitmix64(s);
}

// Deterministic random stream. Draws go through explicit conversions instead of
// std::*_distribution, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Unbiased integer in [0, n); rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit =
            std::numeric_limits<std::uint64_t>::max() -
            std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Index sampled from an unnormalized non-negative weight vector.
    std::size_t categorical(const double* weights, std::size_t n) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += weights[i];
        double r = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += weights[i];
            if (r < acc) return i;
        }
        return n - 1;  // fp residue
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent stream derived from the original seed and a salt; does not
    // consume state from this stream.
    Rng derive(std::uint64_t salt_a, std::uint64_t salt_b = 0) const {
        return Rng(mix_seed(seed_, salt_a, salt_b));
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace ontotrain
