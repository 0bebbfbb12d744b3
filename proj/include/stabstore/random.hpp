#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace stabstore {

/// splitmix64 finalizer; used for seed derivation.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of one Monte Carlo trial. Pure function of its coordinates, so any
/// single trial can be recomputed without replaying the sweep.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t cell,
                                    std::uint64_t trial) noexcept {
    return mix64(base ^ mix64(cell ^ mix64(trial + 0x5851f42d4c957f2dULL)));
}

/// Thin wrapper over mt19937_64 with distribution code that does not depend
/// on the standard library implementation (std::uniform_*_distribution is
/// unspecified across vendors, which would break byte-identical outputs).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n) {
        const unsigned __int128 prod =
            static_cast<unsigned __int128>(engine_()) * static_cast<unsigned __int128>(n);
        return static_cast<std::size_t>(prod >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    /// k distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < k; ++i) {
            std::swap(idx[i], idx[i + below(n - i)]);
        }
        idx.resize(k);
        return idx;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace stabstore
