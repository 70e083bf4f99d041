#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hz {

inline uint64_t fnv1a64(const void* bytes, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    uint64_t h = 1469598103934665603ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

namespace detail {
inline uint64_t mix64(uint64_t x) {
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27; x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}
}  // namespace detail

// Counter-based stream: the value at position i is a pure function of
// (key, i), so a stream can be split by deriving child keys and replayed
// exactly regardless of how work is scheduled across threads.
class RngStream {
public:
    RngStream() = default;
    explicit RngStream(uint64_t key) : key_(key) {}

    static RngStream root(uint64_t seed) {
        return RngStream(detail::mix64(seed + 0x9e3779b97f4a7c15ull));
    }

    // Child stream; same (parent, salt) always yields the same child.
    RngStream derive(uint64_t salt) const {
        return RngStream(detail::mix64(key_ ^ detail::mix64(salt * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull)));
    }
    RngStream derive(std::string_view name) const { return derive(fnv1a64(name)); }

    uint64_t next_u64() {
        ++ctr_;
        return detail::mix64(key_ + ctr_ * 0x9e3779b97f4a7c15ull);
    }

    // [0, 1)
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n).
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        uint64_t lim = ~uint64_t(0) - (~uint64_t(0) % n);
        uint64_t v;
        do { v = next_u64(); } while (v >= lim);
        return v % n;
    }

    double normal() {
        if (has_spare_) { has_spare_ = false; return spare_; }
        double u1, u2;
        do { u1 = uniform01(); } while (u1 <= 0.0);
        u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

private:
    uint64_t key_ = 0;
    uint64_t ctr_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace hz
