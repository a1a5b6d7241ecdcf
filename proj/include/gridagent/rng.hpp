#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace gridagent {

// FNV-1a over raw bytes. Used for manifest/vocab integrity hashes and for
// deriving independent seed streams; not cryptographic.
inline uint64_t fnv1a64_bytes(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64_bytes(s.data(), s.size(), h);
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derives a child seed from a parent seed plus a purpose tag and index.
inline uint64_t derive_seed(uint64_t parent, std::string_view purpose, uint64_t index = 0) {
    uint64_t h = fnv1a64(purpose);
    h = fnv1a64_bytes(&parent, sizeof(parent), h);
    h = fnv1a64_bytes(&index, sizeof(index), h);
    return splitmix64(h);
}

// Deterministic uniform double in [-1, 1) from a single hashed draw.
// Stateless; used where a value must depend only on its key.
inline double hash_unit(uint64_t key) {
    uint64_t b = splitmix64(key);
    return static_cast<double>(b >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

// mt19937_64 wrapper. All bounded draws go through next_below (modulo) so
// results do not depend on libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // uniform in [0, bound)
    uint64_t next_below(uint64_t bound) { return bound == 0 ? 0 : engine_() % bound; }

    int next_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo + 1)));
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0); }

    // uniform in [lo, hi)
    double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    bool next_bool() { return (engine_() & 1u) != 0; }

    template <typename T>
    const T& choice(const std::vector<T>& v) {
        return v[next_below(v.size())];
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace gridagent
