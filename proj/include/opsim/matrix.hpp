#pragma once

#include <cassert>
#include <vector>

#include "opsim/vec.hpp"

namespace opsim {

// Dense square matrix, row-major. Sized for the experiments in this library
// (n up to a couple thousand); not a general linear-algebra type.
class Matrix {
public:
    Matrix() = default;
    explicit Matrix(int n, double fill = 0.0) : n_(n), data_(static_cast<std::size_t>(n) * n, fill) {}

    int size() const { return n_; }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * n_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * n_ + j]; }

    const std::vector<double>& data() const { return data_; }

    static Matrix identity(int n) {
        Matrix m(n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool operator==(const Matrix& other) const = default;

private:
    int n_ = 0;
    std::vector<double> data_;
};

// Returns W^T * P. Each result entry accumulates over k in ascending order,
// so repeated calls are bit-for-bit reproducible.
inline Matrix transpose_product(const Matrix& w, const Matrix& p) {
    assert(w.size() == p.size());
    const int n = w.size();
    Matrix r(n, 0.0);
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            const double wk = w(k, i);
            if (wk == 0.0) continue;
            for (int j = 0; j < n; ++j) r(i, j) += wk * p(k, j);
        }
    }
    return r;
}

// Returns W^T * v (ascending-k accumulation).
inline Vec transpose_times(const Matrix& w, const Vec& v) {
    assert(static_cast<std::size_t>(w.size()) == v.size());
    const int n = w.size();
    Vec r(n, 0.0);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i) r[i] += w(k, i) * v[k];
    return r;
}

inline Vec row_sums(const Matrix& m) {
    const int n = m.size();
    Vec s(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s[i] += m(i, j);
    return s;
}

inline Vec column_sums(const Matrix& m) {
    const int n = m.size();
    Vec s(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s[j] += m(i, j);
    return s;
}

} // namespace opsim
