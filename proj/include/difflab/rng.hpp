#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace difflab {

// Deterministic RNG. Gaussian draws go through Box-Muller on 53-bit
// uniforms so streams are reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

    // Derive an independent stream from (seed, stream ids).
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t s = mix(seed);
        s = mix(s ^ (a + 0x9e3779b97f4a7c15ULL));
        s = mix(s ^ (b + 0xbf58476d1ce4e5b9ULL));
        s = mix(s ^ (c + 0x94d049bb133111ebULL));
        return Rng(s);
    }

    double uniform() {  // in [0, 1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [lo, hi], rejection-free modulo bias is irrelevant
    // at the ranges used here (T <= 1e4), but we reject anyway.
    int uniform_int(int lo, int hi) {
        const std::uint64_t n = static_cast<std::uint64_t>(hi - lo + 1);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = engine_(); } while (x >= limit);
        return lo + static_cast<int>(x % n);
    }

    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    Eigen::VectorXd gaussian_vec(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = gaussian();
        return v;
    }

    Eigen::MatrixXd gaussian_mat(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = gaussian();
        return m;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {  // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace difflab
