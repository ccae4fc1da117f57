#pragma once

#include <cmath>
#include <cstdint>

namespace mw {

// splitmix64, used only to expand (seed, stream) into xoshiro state.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// xoshiro256++ with splittable streams: the state is derived from
// (seed, stream) only, so replica results do not depend on worker count.
class Rng {
public:
    static Rng stream(uint64_t seed, uint64_t stream_index) {
        Rng r;
        uint64_t sm = seed;
        splitmix64(sm);
        sm ^= 0xD1B54A32D192ED03ull * (stream_index + 1);
        for (int i = 0; i < 4; ++i) r.s_[i] = splitmix64(sm);
        return r;
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double exponential(double lambda) {
        return -std::log1p(-uniform()) / lambda;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4] = {1, 2, 3, 4};
};

}  // namespace mw
