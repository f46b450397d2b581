#pragma once

// Counter-based random number generation (Philox 4x32-10, Salmon et al. 2011).
// Every draw is a pure function of (seed, purpose, path, agent, atom, index),
// so simulation output does not depend on scheduling or thread count.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace jumpmfg {

namespace detail {

inline void philox_round(uint32_t ctr[4], const uint32_t key[2]) {
    constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    const uint64_t p0 = static_cast<uint64_t>(M0) * ctr[0];
    const uint64_t p1 = static_cast<uint64_t>(M1) * ctr[2];
    const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
    const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
    const uint32_t out[4] = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    ctr[0] = out[0];
    ctr[1] = out[1];
    ctr[2] = out[2];
    ctr[3] = out[3];
}

inline void philox4x32_10(uint32_t ctr[4], uint32_t k0, uint32_t k1) {
    constexpr uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    uint32_t key[2] = {k0, k1};
    for (int round = 0; round < 10; ++round) {
        philox_round(ctr, key);
        key[0] += W0;
        key[1] += W1;
    }
}

inline double u64_to_unit_double(uint64_t x) {
    // (0,1): 53 mantissa bits, offset by half an ulp so log() is safe
    return (static_cast<double>(x >> 11) + 0.5) * 0x1p-53;
}

}  // namespace detail

// One logical stream of i.i.d. draws, identified by a seed, a purpose tag and
// the (path, agent, atom) coordinates of the object being simulated.
class RngStream {
public:
    RngStream(uint64_t seed, uint32_t purpose, uint64_t path, uint32_t agent = 0,
              uint32_t atom = 0)
        : k0_(static_cast<uint32_t>(seed) ^ purpose),
          k1_(static_cast<uint32_t>(seed >> 32) ^ (purpose * 0x85EBCA6Bu)),
          c0_(static_cast<uint32_t>(path)),
          c1_(static_cast<uint32_t>(path >> 32) ^ (agent << 16) ^ atom) {}

    // Four uint32 words at counter index `idx`.
    void block(uint64_t idx, uint32_t out[4]) const {
        uint32_t ctr[4] = {c0_, c1_, static_cast<uint32_t>(idx),
                           static_cast<uint32_t>(idx >> 32)};
        detail::philox4x32_10(ctr, k0_, k1_);
        out[0] = ctr[0];
        out[1] = ctr[1];
        out[2] = ctr[2];
        out[3] = ctr[3];
    }

    // Two uniforms in (0,1) per counter index.
    void uniform_pair(uint64_t idx, double& u0, double& u1) const {
        uint32_t w[4];
        block(idx, w);
        u0 = detail::u64_to_unit_double((static_cast<uint64_t>(w[0]) << 32) | w[1]);
        u1 = detail::u64_to_unit_double((static_cast<uint64_t>(w[2]) << 32) | w[3]);
    }

    double uniform(uint64_t idx) const {
        double u0, u1;
        uniform_pair(idx >> 1, u0, u1);
        return (idx & 1) ? u1 : u0;
    }

    // Standard normal via Box-Muller; one counter index yields two normals.
    void normal_pair(uint64_t idx, double& n0, double& n1) const {
        double u0, u1;
        uniform_pair(idx, u0, u1);
        const double r = std::sqrt(-2.0 * std::log(u0));
        const double a = 2.0 * std::numbers::pi * u1;
        n0 = r * std::cos(a);
        n1 = r * std::sin(a);
    }

    double normal(uint64_t idx) const {
        double n0, n1;
        normal_pair(idx >> 1, n0, n1);
        return (idx & 1) ? n1 : n0;
    }

private:
    uint32_t k0_, k1_, c0_, c1_;
};

// A stateful view over an RngStream for sequential consumers (thinning loops),
// still deterministic because the cursor position is a function of the draws.
class SequentialRng {
public:
    explicit SequentialRng(RngStream stream) : stream_(stream) {}

    double uniform() { return stream_.uniform(cursor_++); }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

private:
    RngStream stream_;
    uint64_t cursor_ = 0;
};

// Purpose tags keep independent uses of the same seed uncorrelated.
namespace rng_purpose {
constexpr uint32_t brownian = 0x10u;
constexpr uint32_t jumps = 0x20u;
constexpr uint32_t jump_placement = 0x21u;
constexpr uint32_t agent_types = 0x30u;
constexpr uint32_t lattice_paths = 0x40u;
}  // namespace rng_purpose

}  // namespace jumpmfg
