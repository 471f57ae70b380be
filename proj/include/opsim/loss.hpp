#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "opsim/errors.hpp"
#include "opsim/mixing.hpp"
#include "opsim/vec.hpp"

namespace opsim {

// One labelled datum: feature vector a and binary label y in {-1, +1}.
struct Sample {
    Vec features;
    int label = 1;
};

struct LossSpec {
    double lambda = 1e-4; // l2 regularization coefficient
};

namespace detail {

// log(1 + exp(u)) without overflow for large |u|.
inline double softplus(double u) {
    if (u > 0.0) return u + std::log1p(std::exp(-u));
    return std::log1p(std::exp(u));
}

inline double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

} // namespace detail

// Regularized logistic loss: log(1 + exp(-y <a,x>)) + (lambda/2) ||x||^2.
inline double loss(const LossSpec& spec, const Vec& x, const Sample& s) {
    check_same_dim(x, s.features, "loss");
    const double margin = dot(s.features, x);
    return detail::softplus(-static_cast<double>(s.label) * margin) +
           0.5 * spec.lambda * squared_norm(x);
}

// Gradient of the above: -y a sigmoid(-y <a,x>) + lambda x.
inline Vec gradient(const LossSpec& spec, const Vec& x, const Sample& s) {
    check_same_dim(x, s.features, "gradient");
    const double y = static_cast<double>(s.label);
    const double coef = -y * detail::sigmoid(-y * dot(s.features, x));
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = coef * s.features[i] + spec.lambda * x[i];
    return g;
}

// Instantiations of the abstract problem constants:
//   R     squared-diameter bound on the domain,
//   G     gradient-norm bound,
//   sigma gradient standard-deviation bound.
struct BoundEstimates {
    double R = 1.0;
    double G = 1.0;
    double sigma = 0.0;
};

// Step size  sqrt(n) R / (sigma sqrt(1 + n C2) + G sqrt(n C1 T)).
// C1 grows like n^2n, so for n >= 3 this is mostly a reporting utility;
// experiments use a tuned step size.
inline double theoretical_gamma(int n, long long T, const BoundEstimates& b, const TheoryConstants& c) {
    const double nn = static_cast<double>(n);
    const double tt = static_cast<double>(T);
    return std::sqrt(nn) * b.R /
           (b.sigma * std::sqrt(1.0 + nn * c.C2) + b.G * std::sqrt(nn * c.C1 * tt));
}

namespace detail {

// Mean loss and gradient over a sample pool; the regularizer appears once
// since it is part of every per-sample loss.
inline double mean_loss(const LossSpec& spec, const Vec& x, const std::vector<Sample>& samples) {
    double s = 0.0;
    for (const auto& smp : samples)
        s += softplus(-static_cast<double>(smp.label) * dot(smp.features, x));
    return s / static_cast<double>(samples.size()) + 0.5 * spec.lambda * squared_norm(x);
}

inline Vec mean_gradient(const LossSpec& spec, const Vec& x, const std::vector<Sample>& samples) {
    Vec g(x.size(), 0.0);
    for (const auto& smp : samples) {
        const double y = static_cast<double>(smp.label);
        const double coef = -y * sigmoid(-y * dot(smp.features, x));
        axpy(coef, smp.features, g);
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = g[i] * inv + spec.lambda * x[i];
    return g;
}

} // namespace detail

// Empirical minimizer of the mean loss over a realized sample stream; the
// comparator point for regret. Full-batch gradient descent with Armijo
// backtracking, stopping once the mean-gradient norm falls below tol.
inline Vec solve_comparator(const std::vector<Sample>& samples, const LossSpec& spec, double tol,
                            Vec start = {}) {
    if (samples.empty()) throw EmptyDataset("solve_comparator: no samples");
    const std::size_t d = samples.front().features.size();
    Vec x = start.empty() ? Vec(d, 0.0) : std::move(start);
    if (x.size() != d) throw DimensionMismatch("solve_comparator: start dimension");

    const long max_iters = 100000;
    double step = 1.0;
    double fx = detail::mean_loss(spec, x, samples);
    for (long it = 0; it < max_iters; ++it) {
        const Vec g = detail::mean_gradient(spec, x, samples);
        const double gnorm2 = squared_norm(g);
        if (std::sqrt(gnorm2) <= tol) return x;
        step *= 2.0; // optimistic restart, then backtrack
        Vec trial(d);
        for (int bt = 0; bt < 60; ++bt) {
            for (std::size_t i = 0; i < d; ++i) trial[i] = x[i] - step * g[i];
            const double ft = detail::mean_loss(spec, trial, samples);
            if (ft <= fx - 0.5 * step * gnorm2) {
                x.swap(trial);
                fx = ft;
                break;
            }
            step *= 0.5;
        }
    }
    throw NonConvergence("solve_comparator: gradient norm above " + std::to_string(tol) +
                         " after " + std::to_string(max_iters) + " iterations");
}

// Concrete (R, G, sigma) for a sample pool. G is the worst-case gradient
// norm over a ball of squared diameter `radius`; sigma is the spread of
// per-sample gradients at x = 0, the fixed reproducible evaluation point.
inline BoundEstimates estimate_bounds(const std::vector<Sample>& samples, const LossSpec& spec,
                                      double radius) {
    if (samples.empty()) throw EmptyDataset("estimate_bounds: no samples");
    BoundEstimates b;
    b.R = radius;
    double max_feat = 0.0;
    for (const auto& s : samples) max_feat = std::max(max_feat, l2_norm(s.features));
    b.G = max_feat + spec.lambda * std::sqrt(radius);

    const std::size_t d = samples.front().features.size();
    Vec mean(d, 0.0);
    for (const auto& s : samples) axpy(-0.5 * static_cast<double>(s.label), s.features, mean);
    for (auto& v : mean) v /= static_cast<double>(samples.size());
    double var = 0.0;
    Vec g(d);
    for (const auto& s : samples) {
        for (std::size_t i = 0; i < d; ++i) g[i] = -0.5 * static_cast<double>(s.label) * s.features[i];
        var += squared_distance(g, mean);
    }
    b.sigma = std::sqrt(var / static_cast<double>(samples.size()));
    return b;
}

} // namespace opsim
