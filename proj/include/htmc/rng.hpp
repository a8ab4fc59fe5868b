#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace htmc {

/// Counter-based random streams. A stream is identified by a 64-bit seed plus
/// a short list of ids (level, replicate, ...). Draws from a stream depend
/// only on (seed, ids, draw index), so results are independent of thread
/// scheduling and evaluation order.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

    Rng(uint64_t seed, std::initializer_list<uint64_t> ids) : state_(seed) {
        state_ = mix(state_ ^ 0x9e3779b97f4a7c15ull);
        for (uint64_t id : ids) state_ = mix(state_ ^ (id + 0xbf58476d1ce4e5b9ull));
    }

    Rng stream(uint64_t id) const {
        Rng r(*this);
        r.state_ = mix(r.state_ ^ (id + 0xbf58476d1ce4e5b9ull));
        return r;
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    double normal() {
        // Box-Muller, one value per call (second discarded for simplicity).
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Poisson draw by inversion; large means are split so the inversion
    /// product never underflows. Deterministic given the stream state.
    long poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        long total = 0;
        while (lambda > 30.0) {
            total += poisson_small(lambda / 2.0);
            lambda /= 2.0;
        }
        return total + poisson_small(lambda);
    }

    /// Index into a categorical distribution given cumulative weights.
    int categorical(const double* cum, int n) {
        double u = uniform() * cum[n - 1];
        for (int j = 0; j < n; ++j)
            if (u < cum[j]) return j;
        return n - 1;
    }

private:
    uint64_t state_;

    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    long poisson_small(double lambda) {
        const double limit = std::exp(-lambda);
        long k = 0;
        double prod = uniform();
        while (prod > limit) {
            ++k;
            prod *= uniform();
        }
        return k;
    }
};

}  // namespace htmc
