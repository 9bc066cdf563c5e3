#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace rppgm {

// SplitMix64 finalizer; used to derive independent seeds from tuples such as
// (run seed, iteration, sample index).
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return mix_seed(mix_seed(mix_seed(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

// Thin wrapper over mt19937_64. Distributions are constructed per draw so the
// engine state is the entire generator state (no cached Box-Muller halves),
// which keeps checkpoint/resume exact.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double normal() { return std::normal_distribution<double>{0.0, 1.0}(engine_); }
    double uniform() { return std::uniform_real_distribution<double>{0.0, 1.0}(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>{lo, hi}(engine_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>{0, n - 1}(engine_); }
    std::uint64_t next_u64() { return engine_(); }

    std::vector<double> normal_vector(std::size_t n) {
        std::vector<double> out(n);
        for (auto& x : out) x = normal();
        return out;
    }

    std::string serialize() const;
    static Rng deserialize(const std::string& state);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace rppgm
