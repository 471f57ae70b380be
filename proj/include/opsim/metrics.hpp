#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "opsim/engine.hpp"
#include "opsim/errors.hpp"
#include "opsim/loss.hpp"
#include "opsim/mixing.hpp"

namespace opsim {

struct MetricsRow {
    int round = 0;
    double avg_loss = 0.0;
    double cum_regret = 0.0;
    double consensus_error = 0.0;
};

struct MetricsSeries {
    std::vector<MetricsRow> rows;
    std::string fingerprint;
};

// (1 / (n * up_to)) * sum over the first up_to rounds of all recorded losses.
inline double average_loss(const Trajectory& traj, int up_to) {
    if (traj.rounds == 0 || traj.n == 0) throw EmptyTrajectory("average_loss: empty trajectory");
    if (up_to < 1 || up_to > traj.rounds)
        throw Error("average_loss: up_to out of range [1, " + std::to_string(traj.rounds) + "]");
    double s = 0.0;
    for (int t = 0; t < up_to; ++t)
        for (double v : traj.losses[t]) s += v;
    return s / (static_cast<double>(traj.n) * up_to);
}

// Cumulative regret against a fixed comparator, evaluated on the realized
// samples: result[t-1] = sum_{s<=t} sum_i (f(x_s^i; xi) - f(x*; xi)).
inline std::vector<double> regret(const Trajectory& traj, const Vec& comparator,
                                  const LossSpec& spec, const StreamPartition& partition) {
    if (static_cast<int>(comparator.size()) != traj.d)
        throw DimensionMismatch("regret: comparator has dimension " +
                                std::to_string(comparator.size()) + ", models have " +
                                std::to_string(traj.d));
    std::vector<double> series;
    series.reserve(traj.rounds);
    double cum = 0.0;
    for (int t = 0; t < traj.rounds; ++t) {
        for (int i = 0; i < traj.n; ++i)
            cum += traj.losses[t][i] - loss(spec, comparator, partition.at(i, t));
        series.push_back(cum);
    }
    return series;
}

// Average squared distance of the models from the across-node mean of z:
//   (1/up_to) * sum_{t < up_to} sum_i ||x_{t+1}^i - zbar_{t+1}||^2,
// computed over the stored snapshots (normalized by their count when the
// snapshot stride skips rounds).
inline double consensus_error(const Trajectory& traj, int up_to) {
    if (traj.rounds == 0 || traj.n == 0) throw EmptyTrajectory("consensus_error: empty trajectory");
    if (up_to < 1 || up_to > traj.rounds)
        throw Error("consensus_error: up_to out of range [1, " + std::to_string(traj.rounds) + "]");
    double total = 0.0;
    int used = 0;
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
        const int round = traj.snapshots[k].round;
        if (round < 1 || round > up_to) continue;
        ++used;
        const auto& snap = traj.snapshots[k];
        Vec zbar(traj.d, 0.0);
        for (int i = 0; i < traj.n; ++i) axpy(1.0, snap.z[i], zbar);
        for (auto& v : zbar) v /= traj.n;
        for (int i = 0; i < traj.n; ++i) {
            Vec x = traj.model_at(k, i);
            total += squared_distance(x, zbar);
        }
    }
    if (used == 0)
        throw MissingSnapshots("consensus_error: no stored snapshots in rounds [1, " +
                               std::to_string(up_to) + "]");
    return total / static_cast<double>(used);
}

// The concrete regret bound C1 n G^2 T gamma + (1 + n C2) sigma^2 T gamma
// + n R^2 / (2 gamma), evaluated at the prescribed step size.
inline double theoretical_regret_bound(int n, long long T, const BoundEstimates& b,
                                       const TheoryConstants& c) {
    const double gamma = theoretical_gamma(n, T, b, c);
    const double nn = static_cast<double>(n);
    const double tt = static_cast<double>(T);
    return c.C1 * nn * b.G * b.G * tt * gamma + (1.0 + nn * c.C2) * b.sigma * b.sigma * tt * gamma +
           nn * b.R * b.R / (2.0 * gamma);
}

// One row per stored snapshot round; prefix quantities are incremental so the
// whole series costs O(T n + S n d).
inline MetricsSeries compute_metrics(const Trajectory& traj, const Vec& comparator,
                                     const LossSpec& spec, const StreamPartition& partition,
                                     std::string fingerprint = {}) {
    MetricsSeries series;
    series.fingerprint = std::move(fingerprint);
    if (traj.rounds == 0) return series;

    const auto cum_regret = regret(traj, comparator, spec, partition);
    std::vector<double> loss_prefix(traj.rounds);
    double acc = 0.0;
    for (int t = 0; t < traj.rounds; ++t) {
        for (double v : traj.losses[t]) acc += v;
        loss_prefix[t] = acc;
    }

    double consensus_acc = 0.0;
    int consensus_count = 0;
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
        const int round = traj.snapshots[k].round;
        if (round < 1) continue;
        const auto& snap = traj.snapshots[k];
        Vec zbar(traj.d, 0.0);
        for (int i = 0; i < traj.n; ++i) axpy(1.0, snap.z[i], zbar);
        for (auto& v : zbar) v /= traj.n;
        for (int i = 0; i < traj.n; ++i)
            consensus_acc += squared_distance(traj.model_at(k, i), zbar);
        ++consensus_count;

        MetricsRow row;
        row.round = round;
        row.avg_loss = loss_prefix[round - 1] / (static_cast<double>(traj.n) * round);
        row.cum_regret = cum_regret[round - 1];
        row.consensus_error = consensus_acc / consensus_count;
        series.rows.push_back(row);
    }
    return series;
}

inline void write_metrics_csv(std::ostream& os, const MetricsSeries& series,
                              const std::string& algo, std::uint64_t seed) {
    os << "round,algo,seed,avg_loss,cum_regret,consensus_error\n";
    os.precision(17);
    for (const auto& row : series.rows)
        os << row.round << ',' << algo << ',' << seed << ',' << row.avg_loss << ','
           << row.cum_regret << ',' << row.consensus_error << '\n';
}

} // namespace opsim
