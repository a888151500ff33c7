#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace feddpg {

// splitmix64: used to derive stream seeds from (seed, salt...) tuples so that
// clients/rounds get decorrelated, reproducible streams.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t seed_combine(uint64_t seed, uint64_t salt) {
    return mix64(seed ^ mix64(salt + 0x7f4a7c15u));
}

inline uint64_t seed_combine(uint64_t seed, uint64_t a, uint64_t b) {
    return seed_combine(seed_combine(seed, a), b);
}

// mt19937_64 with hand-rolled distributions. The engine sequence is pinned by
// the standard; the std distributions are not, so we sample ourselves to keep
// runs bit-reproducible across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // uniform in [0, n), rejection-sampled, n >= 1
    uint64_t uniform_below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform_below(static_cast<uint64_t>(hi - lo + 1)));
    }

    // uniform in [0, 1) with 53-bit resolution
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    double normal() {
        // Box-Muller, one value per call (cached pair would add hidden state)
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Marsaglia-Tsang; shape > 0, unit scale
    double gamma(double shape) {
        if (shape < 1.0) {
            const double u = uniform01();
            return gamma(shape + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(double alpha, int k) {
        std::vector<double> w(k);
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
            w[i] = gamma(alpha);
            total += w[i];
        }
        for (double& v : w) v /= total;
        return w;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = uniform_below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from [0, n), ascending
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> ids(n);
        for (int i = 0; i < n; ++i) ids[i] = i;
        for (int i = 0; i < k; ++i) {
            const int j = i + static_cast<int>(uniform_below(static_cast<uint64_t>(n - i)));
            std::swap(ids[i], ids[j]);
        }
        ids.resize(k);
        std::sort(ids.begin(), ids.end());
        return ids;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace feddpg
