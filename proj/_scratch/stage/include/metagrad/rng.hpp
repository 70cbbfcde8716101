#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace metagrad {

/// splitmix64 finalizer; used to derive decorrelated stream seeds.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream_id) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream_id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Deterministic random source. Wraps std::mt19937_64 but hand-rolls the
/// uniform/normal transforms: the std distributions are implementation-defined
/// and keep hidden state, which would break bit-exact checkpoint resume.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Plain modulo: n is always tiny relative to
    /// 2^64, so the bias is far below any test tolerance.
    std::uint64_t uniform_int(std::uint64_t n) { return engine_() % n; }

    /// Standard normal via Box-Muller, no cached spare.
    double normal() {
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    /// In-place Fisher-Yates over [first, last).
    template <class It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::uint64_t j = uniform_int(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    std::string serialize_state() const;
    void restore_state(const std::string& s);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

/// Per-purpose streams of a run, derived from one user seed. Train and eval
/// never contend: drawing training episodes cannot perturb eval reproducibility.
struct RngStreams {
    Rng init;
    Rng train;

    static RngStreams for_seed(std::uint64_t seed) {
        return RngStreams{Rng(mix_seed(seed, 0)), Rng(mix_seed(seed, 1))};
    }
};

} // namespace metagrad
