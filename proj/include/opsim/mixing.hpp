#pragma once

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "opsim/errors.hpp"
#include "opsim/graph.hpp"
#include "opsim/matrix.hpp"

namespace opsim {

enum class MatrixKind { row_stochastic, doubly_stochastic };

inline const char* to_string(MatrixKind k) {
    return k == MatrixKind::row_stochastic ? "row_stochastic" : "doubly_stochastic";
}

// Confusion matrix W over a digraph: W(i,j) is the weight node i sends to
// node j, every row sums to 1. Doubly stochastic additionally means symmetric
// with unit column sums.
struct MixingMatrix {
    Matrix weights;
    MatrixKind kind = MatrixKind::row_stochastic;

    int size() const { return weights.size(); }
};

// Uniform weights over the out-neighborhood (self included). Requires the
// self-loop convention so no row can be empty.
inline MixingMatrix build_row_stochastic(const DirectedGraph& g) {
    MixingMatrix m;
    m.kind = MatrixKind::row_stochastic;
    m.weights = Matrix(g.n);
    for (int i = 0; i < g.n; ++i) {
        const auto& nb = g.out_neighbors[i];
        if (nb.empty()) throw EmptyRow("node " + std::to_string(i) + " has no out-neighbors");
        const double w = 1.0 / static_cast<double>(nb.size());
        for (int j : nb) m.weights(i, j) = w;
    }
    return m;
}

// Metropolis-Hastings weights on a symmetric digraph:
//   W(i,j) = 1 / (1 + max(d_i, d_j)) for mutual neighbors i != j,
//   W(i,i) = 1 - sum of the rest,
// where d is the out-degree not counting the self-loop.
inline MixingMatrix build_doubly_stochastic(const DirectedGraph& g) {
    std::vector<int> degree(g.n, 0);
    for (int i = 0; i < g.n; ++i) {
        for (int j : g.out_neighbors[i]) {
            if (!g.has_edge(j, i))
                throw AsymmetricInput("edge (" + std::to_string(i) + "," + std::to_string(j) +
                                      ") has no reverse; run mutual_subgraph first");
            if (j != i) ++degree[i];
        }
    }
    MixingMatrix m;
    m.kind = MatrixKind::doubly_stochastic;
    m.weights = Matrix(g.n);
    for (int i = 0; i < g.n; ++i) {
        double off = 0.0;
        for (int j : g.out_neighbors[i]) {
            if (j == i) continue;
            const double w = 1.0 / (1.0 + static_cast<double>(std::max(degree[i], degree[j])));
            m.weights(i, j) = w;
            off += w;
        }
        m.weights(i, i) = 1.0 - off;
    }
    return m;
}

// W = (1/n) * ones. The communication pattern of centralized learning.
inline MixingMatrix fully_connected_matrix(int n) {
    if (n < 1) throw Error("fully_connected_matrix: n must be >= 1");
    MixingMatrix m;
    m.kind = MatrixKind::doubly_stochastic;
    m.weights = Matrix(n, 1.0 / static_cast<double>(n));
    return m;
}

// No communication at all; used by the purely local baseline.
inline MixingMatrix identity_mixing(int n) {
    if (n < 1) throw Error("identity_mixing: n must be >= 1");
    MixingMatrix m;
    m.kind = MatrixKind::doubly_stochastic;
    m.weights = Matrix::identity(n);
    return m;
}

// Constants governing the geometric concentration of backward products of
// row-stochastic matrices:
//   C = 4, q = 1 - n^-n, delta_min = n^-n (worst-case lower bound),
//   C1 = 8Cq / (delta_min (1-q)) + 1, C2 = 2Cq / (delta_min (1-q)).
struct TheoryConstants {
    double C = 4.0;
    double q = 0.0;
    double delta_min = 1.0;
    double C1 = 1.0;
    double C2 = 0.0;
};

inline TheoryConstants theory_constants(int n) {
    if (n < 1) throw Error("theory_constants: n must be >= 1");
    const double nn = std::pow(static_cast<double>(n), static_cast<double>(n));
    if (!std::isfinite(nn))
        throw Overflow("n^n exceeds double range at n = " + std::to_string(n) +
                       "; use a tuned step size instead");
    TheoryConstants c;
    c.C = 4.0;
    c.delta_min = 1.0 / nn;
    c.q = 1.0 - c.delta_min;
    // 1 - q equals delta_min by definition; using it directly avoids the
    // catastrophic rounding of (1 - q) once n^-n drops below machine epsilon.
    const double core = c.C * c.q / (c.delta_min * c.delta_min);
    c.C1 = 8.0 * core + 1.0;
    c.C2 = 2.0 * core;
    return c;
}

// Empirical record of how (W^T)^t concentrates:
//   psi                   stochastic vector estimated from the last power,
//   max_deviation_per_lag max_ij |(W^T)^t_ij - psi_i| for t = 1..horizon,
//   min_colsum_per_lag    min_i sum_j (W^T)^t_ij per lag,
//   min_column_sum        minimum of the above over all lags.
struct ProductDiagnostics {
    int horizon = 0;
    Vec psi;
    Vec max_deviation_per_lag;
    Vec min_colsum_per_lag;
    double min_column_sum = 0.0;
};

inline ProductDiagnostics backward_product_diagnostics(const MixingMatrix& w, int horizon) {
    if (horizon < 1) throw Error("backward_product_diagnostics: horizon must be >= 1");
    const int n = w.size();
    for (int i = 0; i < n; ++i)
        if (!(w.weights(i, i) > 0.0))
            throw PreconditionError("diagnostics require a positive diagonal (self-loop weight); "
                                    "row " + std::to_string(i) + " has none");

    // Pass 1: psi from the final power's row profile. Products of column-
    // stochastic matrices stay column stochastic, so psi sums to 1.
    Matrix p = transpose_product(w.weights, Matrix::identity(n));
    for (int t = 2; t <= horizon; ++t) p = transpose_product(w.weights, p);
    ProductDiagnostics diag;
    diag.horizon = horizon;
    diag.psi.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += p(i, j);
        diag.psi[i] = s / static_cast<double>(n);
    }

    // Pass 2: per-lag deviation from psi and the prod-lower sums.
    diag.max_deviation_per_lag.reserve(horizon);
    diag.min_colsum_per_lag.reserve(horizon);
    diag.min_column_sum = std::numeric_limits<double>::infinity();
    p = transpose_product(w.weights, Matrix::identity(n));
    for (int t = 1; t <= horizon; ++t) {
        if (t > 1) p = transpose_product(w.weights, p);
        double dev = 0.0;
        double min_sum = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) {
                s += p(i, j);
                dev = std::max(dev, std::abs(p(i, j) - diag.psi[i]));
            }
            min_sum = std::min(min_sum, s);
        }
        diag.max_deviation_per_lag.push_back(dev);
        diag.min_colsum_per_lag.push_back(min_sum);
        diag.min_column_sum = std::min(diag.min_column_sum, min_sum);
    }
    return diag;
}

// --- plain-text matrix files: first line n, then n rows of n decimals ---

inline void save_matrix(std::ostream& os, const MixingMatrix& m) {
    const int n = m.size();
    os << n << '\n';
    os.precision(17);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j) os << ' ';
            os << m.weights(i, j);
        }
        os << '\n';
    }
}

inline MixingMatrix load_matrix(std::istream& is) {
    int n = 0;
    if (!(is >> n) || n < 1) throw ParseError("expected matrix dimension on first line", 1);
    MixingMatrix m;
    m.weights = Matrix(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double v;
            if (!(is >> v)) throw ParseError("expected " + std::to_string(n) + " decimals per row", i + 2);
            if (v < 0.0) throw ValidationError("negative weight at (" + std::to_string(i) + "," + std::to_string(j) + ")");
            m.weights(i, j) = v;
        }
    bool doubly = true;
    for (int i = 0; i < n; ++i) {
        double row = 0.0, col = 0.0;
        for (int j = 0; j < n; ++j) {
            row += m.weights(i, j);
            col += m.weights(j, i);
            if (std::abs(m.weights(i, j) - m.weights(j, i)) > 1e-15) doubly = false;
        }
        if (std::abs(row - 1.0) > 1e-12)
            throw ValidationError("row " + std::to_string(i) + " sums to " + std::to_string(row) + ", not 1");
        if (std::abs(col - 1.0) > 1e-12) doubly = false;
    }
    m.kind = doubly ? MatrixKind::doubly_stochastic : MatrixKind::row_stochastic;
    return m;
}

} // namespace opsim
