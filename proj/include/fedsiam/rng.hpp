#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedsiam {

// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Child seed from an experiment seed and a path of tags (purpose, client id, round, epoch, ...).
// Only the values matter, never the call order, so clients can be trained in any order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t v : path) {
        h = mix64(h ^ mix64(v + 0x632be59bd9b4e019ULL));
    }
    return h;
}

// Purpose tags for derive_seed.
enum class SeedTag : std::uint64_t {
    ModelInit = 1,
    Partition = 2,
    BlobCenters = 3,
    BlobSamples = 4,
    BatchOrder = 5,
};

inline std::uint64_t derive_seed(std::uint64_t seed, SeedTag tag, std::initializer_list<std::uint64_t> path = {}) {
    std::uint64_t h = derive_seed(seed, {static_cast<std::uint64_t>(tag)});
    for (std::uint64_t v : path) {
        h = mix64(h ^ mix64(v + 0x632be59bd9b4e019ULL));
    }
    return h;
}

// Portable random source. The distributions are written out here rather than taken from
// <random> so that streams are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    // Standard normal (Marsaglia polar method).
    double normal();

    // Gamma(shape, 1) via Marsaglia-Tsang, with the shape < 1 boost.
    double gamma(double shape);

    template <typename It>
    void shuffle(It first, It last) {
        auto n = last - first;
        for (auto i = n - 1; i > 0; --i) {
            auto j = static_cast<decltype(i)>(below(static_cast<std::uint64_t>(i) + 1));
            std::swap(first[i], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fedsiam
