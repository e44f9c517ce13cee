#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace metamem {

// 64-bit FNV-1a. Used for config digests, transcript fingerprints and
// sub-stream seed derivation; not cryptographic.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Deterministic RNG with a fixed algorithm (splitmix64) so that seeded runs
// are byte-reproducible across platforms and standard libraries.
class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Unbiased value in [0, n) via rejection sampling. n must be > 0.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    double next_double() { // [0, 1)
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

private:
    std::uint64_t state_;
};

// Named sub-stream derivation: all randomness in a run flows from one seed
// through stream names, so one --seed reproduces the whole pipeline.
inline DetRng sub_rng(std::int64_t seed, std::string_view stream) {
    std::uint64_t h = fnv1a64(stream, static_cast<std::uint64_t>(seed) ^ 0x9e3779b97f4a7c15ull);
    return DetRng(h);
}

// Fisher-Yates with DetRng; std::shuffle is implementation-defined and
// would break byte-level replay determinism.
template <class T>
void det_shuffle(std::vector<T>& v, DetRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.bounded(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace metamem
