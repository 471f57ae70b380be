#pragma once

#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "opsim/data.hpp"
#include "opsim/errors.hpp"
#include "opsim/loss.hpp"
#include "opsim/mixing.hpp"

namespace opsim {

// Per-node push-sum state. x == z / omega after every round.
struct NodeState {
    Vec z;
    double omega = 1.0;
    Vec x;
};

inline std::vector<NodeState> init_states(int n, int d) {
    if (n < 1 || d < 1) throw Error("init_states: n and d must be >= 1");
    std::vector<NodeState> states(n);
    for (auto& s : states) {
        s.z.assign(d, 0.0);
        s.omega = 1.0;
        s.x.assign(d, 0.0);
    }
    return states;
}

enum class AlgorithmKind { ops, dol_symm, dol_asymm, col, local_ogd };

inline const char* to_string(AlgorithmKind a) {
    switch (a) {
        case AlgorithmKind::ops: return "ops";
        case AlgorithmKind::dol_symm: return "dol_symm";
        case AlgorithmKind::dol_asymm: return "dol_asymm";
        case AlgorithmKind::col: return "col";
        case AlgorithmKind::local_ogd: return "local_ogd";
    }
    return "?";
}

namespace detail {

// Column-sparse view of W: in_nbrs[i] lists (k, W(k,i)) for W(k,i) > 0 in
// ascending k, the fixed aggregation order.
using InNeighborView = std::vector<std::vector<std::pair<int, double>>>;

inline InNeighborView in_neighbor_view(const MixingMatrix& w) {
    const int n = w.size();
    InNeighborView view(n);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            if (w.weights(k, i) > 0.0) view[i].emplace_back(k, w.weights(k, i));
    return view;
}

} // namespace detail

// One push-sum round with the gradients already evaluated:
//   z half-step, then z' = W^T z_half, omega' = W^T omega, x' = z' / omega'.
inline void push_sum_step(std::vector<NodeState>& states, const detail::InNeighborView& in_nbrs,
                          double gamma, const std::vector<Vec>& gradients) {
    const int n = static_cast<int>(states.size());
    const std::size_t d = states.front().z.size();
    std::vector<Vec> z_half(n);
    for (int i = 0; i < n; ++i) {
        z_half[i] = states[i].z;
        axpy(-gamma, gradients[i], z_half[i]);
    }
    std::vector<double> omega_prev(n);
    for (int i = 0; i < n; ++i) omega_prev[i] = states[i].omega;

    for (int i = 0; i < n; ++i) {
        Vec z_new(d, 0.0);
        double omega_new = 0.0;
        for (const auto& [k, wk] : in_nbrs[i]) {
            axpy(wk, z_half[k], z_new);
            omega_new += wk * omega_prev[k];
        }
        if (!(omega_new > 0.0))
            throw NonPositiveOmega("omega became " + std::to_string(omega_new) + " at node " +
                                   std::to_string(i));
        states[i].z = std::move(z_new);
        states[i].omega = omega_new;
        states[i].x = states[i].z;
        for (auto& v : states[i].x) v /= omega_new;
    }
}

// One round of decentralized online gradient descent:
//   x' = W^T (x - gamma * g); omega stays 1 and z mirrors x.
inline void dol_step(std::vector<NodeState>& states, const detail::InNeighborView& in_nbrs,
                     double gamma, const std::vector<Vec>& gradients) {
    const int n = static_cast<int>(states.size());
    const std::size_t d = states.front().x.size();
    std::vector<Vec> u(n);
    for (int i = 0; i < n; ++i) {
        u[i] = states[i].x;
        axpy(-gamma, gradients[i], u[i]);
    }
    for (int i = 0; i < n; ++i) {
        Vec x_new(d, 0.0);
        for (const auto& [k, wk] : in_nbrs[i]) axpy(wk, u[k], x_new);
        states[i].x = std::move(x_new);
        states[i].z = states[i].x;
        states[i].omega = 1.0;
    }
}

namespace detail {

inline std::vector<Vec> eval_gradients(const std::vector<NodeState>& states,
                                       const std::vector<Sample>& samples, const LossSpec& spec) {
    std::vector<Vec> grads(states.size());
    for (std::size_t i = 0; i < states.size(); ++i)
        grads[i] = gradient(spec, states[i].x, samples[i]);
    return grads;
}

} // namespace detail

// Convenience wrappers evaluating the gradients at the current models.
inline std::vector<NodeState> ops_round(std::vector<NodeState> states, const MixingMatrix& w,
                                        double gamma, const std::vector<Sample>& samples,
                                        const LossSpec& spec) {
    const auto view = detail::in_neighbor_view(w);
    const auto grads = detail::eval_gradients(states, samples, spec);
    push_sum_step(states, view, gamma, grads);
    return states;
}

inline std::vector<NodeState> dol_round(std::vector<NodeState> states, const MixingMatrix& w,
                                        double gamma, const std::vector<Sample>& samples,
                                        const LossSpec& spec, bool naive) {
    if (!naive && w.kind != MatrixKind::doubly_stochastic)
        throw MatrixKindMismatch("dol_round: symmetric variant needs a doubly stochastic matrix");
    const auto view = detail::in_neighbor_view(w);
    const auto grads = detail::eval_gradients(states, samples, spec);
    dol_step(states, view, gamma, grads);
    return states;
}

struct RunConfig {
    AlgorithmKind algorithm = AlgorithmKind::ops;
    double gamma = 0.1;
    int rounds = 0;
    MixingMatrix matrix;
    LossSpec loss;
    std::uint64_t seed = 0;
    int snapshot_stride = 0; // 0 = auto
};

// Everything a run produces. Losses and omegas are kept for every round;
// model snapshots are kept at `stride` spacing (plus rounds 0 and T) to
// bound memory on long runs.
struct Trajectory {
    int n = 0;
    int d = 0;
    int rounds = 0;
    int stride = 1;
    std::vector<Vec> omega;  // [t][i], t = 0..T
    std::vector<Vec> losses; // [t-1][i], pre-update loss at round t = 1..T

    struct Snapshot {
        int round;
        std::vector<Vec> z;
    };
    std::vector<Snapshot> snapshots;

    Vec model_at(std::size_t snapshot_idx, int node) const {
        const auto& snap = snapshots[snapshot_idx];
        Vec x = snap.z[node];
        const double w = omega[snap.round][node];
        for (auto& v : x) v /= w;
        return x;
    }
};

namespace detail {

inline int auto_stride(int rounds, int n, int d) {
    const long long total = static_cast<long long>(rounds + 1) * n * d;
    if (total <= 1000000) return 1;
    return (rounds + 999) / 1000;
}

} // namespace detail

// Synchronous execution of T rounds. Per round, every node suffers the loss
// of its current model on its delivered sample, then the configured update
// runs. The local baseline mixes with the identity; centralized learning
// mixes with the uniform full matrix.
inline Trajectory run(const RunConfig& config, const StreamPartition& partition) {
    const int n = partition.n;
    const int d = partition.d;
    const int T = config.rounds;
    if (T > partition.rounds)
        throw Error("run: config wants " + std::to_string(T) + " rounds but the stream has " +
                    std::to_string(partition.rounds));

    MixingMatrix w;
    switch (config.algorithm) {
        case AlgorithmKind::col: w = fully_connected_matrix(n); break;
        case AlgorithmKind::local_ogd: w = identity_mixing(n); break;
        default: w = config.matrix; break;
    }
    if (w.size() != n)
        throw DimensionMismatch("run: matrix is " + std::to_string(w.size()) + "x" +
                                std::to_string(w.size()) + " but the stream has " +
                                std::to_string(n) + " nodes");
    if (config.algorithm == AlgorithmKind::dol_symm && w.kind != MatrixKind::doubly_stochastic)
        throw MatrixKindMismatch("run: dol_symm needs a doubly stochastic matrix");

    const auto view = detail::in_neighbor_view(w);
    auto states = init_states(n, d);

    Trajectory traj;
    traj.n = n;
    traj.d = d;
    traj.rounds = T;
    traj.stride = config.snapshot_stride > 0 ? config.snapshot_stride : detail::auto_stride(T, n, d);
    traj.omega.reserve(T + 1);
    traj.losses.reserve(T);

    auto record_omega = [&] {
        Vec om(n);
        for (int i = 0; i < n; ++i) om[i] = states[i].omega;
        traj.omega.push_back(std::move(om));
    };
    auto record_snapshot = [&](int round) {
        Trajectory::Snapshot snap;
        snap.round = round;
        snap.z.reserve(n);
        for (const auto& s : states) snap.z.push_back(s.z);
        traj.snapshots.push_back(std::move(snap));
    };

    record_omega();
    record_snapshot(0);
    std::vector<Sample> round_samples(n);
    for (int t = 0; t < T; ++t) {
        Vec round_losses(n);
        for (int i = 0; i < n; ++i) {
            round_samples[i] = partition.at(i, t);
            round_losses[i] = loss(config.loss, states[i].x, round_samples[i]);
        }
        traj.losses.push_back(std::move(round_losses));
        const auto grads = detail::eval_gradients(states, round_samples, config.loss);
        if (config.algorithm == AlgorithmKind::ops)
            push_sum_step(states, view, config.gamma, grads);
        else
            dol_step(states, view, config.gamma, grads);
        record_omega();
        const int round = t + 1;
        if (round % traj.stride == 0 || round == T) record_snapshot(round);
    }
    return traj;
}

// Plain CSV of the per-round scalars: round,node,omega,loss.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "round,node,omega,loss\n";
    os.precision(17);
    for (int t = 1; t <= traj.rounds; ++t)
        for (int i = 0; i < traj.n; ++i)
            os << t << ',' << i << ',' << traj.omega[t][i] << ',' << traj.losses[t - 1][i] << '\n';
}

// Binary dump of the stored model snapshots (z plus the omega row, enough to
// reconstruct x). Layout: magic, n, d, count, then per snapshot the round,
// n omegas, and n*d doubles of z.
inline void write_model_snapshots(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    const char magic[8] = {'O', 'P', 'S', 'N', 'A', 'P', '0', '1'};
    out.write(magic, 8);
    auto put_i64 = [&](std::int64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    put_i64(traj.n);
    put_i64(traj.d);
    put_i64(static_cast<std::int64_t>(traj.snapshots.size()));
    for (const auto& snap : traj.snapshots) {
        put_i64(snap.round);
        out.write(reinterpret_cast<const char*>(traj.omega[snap.round].data()),
                  static_cast<std::streamsize>(traj.n * sizeof(double)));
        for (const auto& z : snap.z)
            out.write(reinterpret_cast<const char*>(z.data()),
                      static_cast<std::streamsize>(traj.d * sizeof(double)));
    }
}

struct SnapshotFile {
    int n = 0, d = 0;
    struct Entry {
        int round;
        Vec omega;
        std::vector<Vec> z;
    };
    std::vector<Entry> entries;
};

inline SnapshotFile read_model_snapshots(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::string(magic, 8) != "OPSNAP01") throw ValidationError(path + ": bad snapshot magic");
    auto get_i64 = [&] {
        std::int64_t v;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    SnapshotFile file;
    file.n = static_cast<int>(get_i64());
    file.d = static_cast<int>(get_i64());
    const auto count = get_i64();
    file.entries.resize(count);
    for (auto& e : file.entries) {
        e.round = static_cast<int>(get_i64());
        e.omega.resize(file.n);
        in.read(reinterpret_cast<char*>(e.omega.data()),
                static_cast<std::streamsize>(file.n * sizeof(double)));
        e.z.assign(file.n, Vec(file.d));
        for (auto& z : e.z)
            in.read(reinterpret_cast<char*>(z.data()),
                    static_cast<std::streamsize>(file.d * sizeof(double)));
    }
    if (!in) throw ValidationError(path + ": truncated snapshot file");
    return file;
}

} // namespace opsim
