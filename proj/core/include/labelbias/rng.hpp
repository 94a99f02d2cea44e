#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace labelbias {

/// splitmix64 scrambling step, used to derive well-separated seeds.
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for a named substream, so that parallel generators drawing from
/// (seed, stream_id) pairs stay independent and reproducible.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream_id) {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream_id * 0x9e3779b97f4a7c15ULL + 1));
}

/// Deterministic random stream. All distributions are implemented explicitly
/// on top of the raw mt19937_64 output so results do not depend on the
/// standard library's distribution implementations.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(mix_seed(seed)) {}
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : engine_(substream_seed(seed, stream_id)) {}

    /// Uniform on (0, 1); never returns exactly 0 or 1.
    double uniform() {
        const double u = (engine_() >> 11) * 0x1.0p-53;
        return u == 0.0 ? 0x1.0p-53 : u;
    }

    /// Standard normal via the Marsaglia polar method (one spare cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double v1 = 0.0, v2 = 0.0, s = 0.0;
        do {
            v1 = 2.0 * uniform() - 1.0;
            v2 = 2.0 * uniform() - 1.0;
            s = v1 * v1 + v2 * v2;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v2 * f;
        has_spare_ = true;
        return v1 * f;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Half-normal with the given scale, i.e. |scale * z| for standard z.
    double half_normal(double scale) { return std::abs(scale * normal()); }

    /// Logistic with location mu and scale s, via inverse CDF.
    double logistic(double mu, double s) {
        const double u = uniform();
        return mu + s * std::log(u / (1.0 - u));
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace labelbias
