#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace setchoice {

// FNV-1a: portable stable string hash, used to key seeds to content (e.g. a
// fold's market ids) instead of enumeration order.
inline uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Counter-based generator: the n-th draw of stream s under seed q is a pure
// function of (q, s, n), so replications and parallel workers can each take a
// stream id and produce the same sequence on any platform. No hidden global
// state, no warm-up.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class RngStream {
public:
    RngStream(uint64_t seed, uint64_t stream)
        : key_(mix64(seed ^ mix64(stream * 0x9e3779b97f4a7c15ULL))), ctr_(0) {}

    // Derive an independent child stream; (seed, stream, id) determinism is
    // preserved because the child key is a pure function of the parent key.
    RngStream child(uint64_t id) const {
        RngStream r(*this);
        r.key_ = mix64(key_ ^ mix64(id + 0x632be59bd9b4e019ULL));
        r.ctr_ = 0;
        return r;
    }

    uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++ctr_); }

    // Uniform on [0,1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0,1), safe to pass through log().
    double next_open() { return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller; the sine partner is cached so consecutive calls cost one
    // transcendental pair per two draws and stay fully deterministic.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_open();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Standard Gumbel via inverse CDF.
    double gumbel() { return -std::log(-std::log(next_open())); }

private:
    uint64_t key_;
    uint64_t ctr_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace setchoice
