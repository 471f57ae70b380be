#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

#include "opsim/errors.hpp"

namespace opsim {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(const Vec& a) { return dot(a, a); }

inline double l2_norm(const Vec& a) { return std::sqrt(squared_norm(a)); }

inline double squared_distance(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void check_same_dim(const Vec& a, const Vec& b, const char* where) {
    if (a.size() != b.size())
        throw DimensionMismatch(std::string(where) + ": dimensions " +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

// SplitMix64 step; used to derive independent per-node/per-purpose seeds from
// one experiment seed without correlated low bits.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace opsim
