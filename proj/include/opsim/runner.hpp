#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "opsim/config.hpp"
#include "opsim/data.hpp"
#include "opsim/engine.hpp"
#include "opsim/graph.hpp"
#include "opsim/metrics.hpp"
#include "opsim/mixing.hpp"

namespace opsim {

struct PreparedMatrix {
    MixingMatrix matrix;
    bool augmented = false; // dol_symm only: mutual subgraph needed repairs
};

// Mixing matrix an algorithm runs with. For dol_symm the mutual subgraph can
// be disconnected on sparse digraphs; running on a disconnected component
// would be meaningless, so the cycle edges are symmetrized instead and the
// repair is reported to the caller (it belongs in the manifest).
inline PreparedMatrix prepare_matrix(AlgorithmKind algo, const DirectedGraph& g) {
    PreparedMatrix out;
    switch (algo) {
        case AlgorithmKind::ops:
        case AlgorithmKind::dol_asymm:
            out.matrix = build_row_stochastic(g);
            break;
        case AlgorithmKind::col:
            out.matrix = fully_connected_matrix(g.n);
            break;
        case AlgorithmKind::local_ogd:
            out.matrix = identity_mixing(g.n);
            break;
        case AlgorithmKind::dol_symm: {
            DirectedGraph m = mutual_subgraph(g);
            if (!is_strongly_connected(m)) {
                for (int i = 0; i < m.n; ++i) {
                    const int j = (i + 1) % m.n;
                    auto insert_sorted = [](std::vector<int>& v, int x) {
                        const auto it = std::lower_bound(v.begin(), v.end(), x);
                        if (it == v.end() || *it != x) v.insert(it, x);
                    };
                    insert_sorted(m.out_neighbors[i], j);
                    insert_sorted(m.out_neighbors[j], i);
                }
                out.augmented = true;
            }
            out.matrix = build_doubly_stochastic(m);
            break;
        }
    }
    return out;
}

inline Dataset load_experiment_dataset(const ExperimentConfig& c) {
    switch (c.data_kind) {
        case DataKind::synthetic:
            return synthetic_dataset(c.synth_samples, c.synth_dim, c.data_seed);
        case DataKind::libsvm:
            return load_libsvm(c.data_path, c.sample_budget);
        case DataKind::csv:
            return load_csv(c.data_path, c.label_column, c.sample_budget);
    }
    throw Error("unreachable dataset kind");
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

// Runs jobs on `workers` threads; each job is independent and writes only
// its own files, so scheduling cannot change any output.
inline void run_jobs(std::vector<std::function<void()>>& jobs, int workers) {
    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    workers = std::min<int>(workers, static_cast<int>(jobs.size()));
    if (workers <= 1) {
        for (auto& job : jobs) job();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs.size());
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t idx = next.fetch_add(1);
                if (idx >= jobs.size()) return;
                try {
                    jobs[idx]();
                } catch (...) {
                    errors[idx] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace detail

// Resolves output_dir against the OPSIM_OUTPUT_ROOT environment variable
// (relative paths only).
inline std::filesystem::path resolve_output_dir(const std::string& output_dir) {
    std::filesystem::path p(output_dir);
    if (p.is_relative()) {
        if (const char* root = std::getenv("OPSIM_OUTPUT_ROOT")) p = std::filesystem::path(root) / p;
    }
    return p;
}

struct RunSummary {
    AlgorithmKind algo = AlgorithmKind::ops;
    std::uint64_t seed = 0;
    double gamma = 0.0;
    double final_avg_loss = 0.0;
    double final_regret = 0.0;
    double final_consensus = 0.0;
    std::string csv_file;
    MetricsSeries series;
};

struct ExperimentResult {
    std::filesystem::path out_dir;
    std::string manifest_file;
    std::vector<RunSummary> runs;
    std::vector<std::string> notes;
};

// Full experiment: dataset -> topology -> per-algorithm matrices -> per-seed
// streams and comparators -> (algorithm x seed) runs in a worker pool, one
// metrics CSV each, plus a manifest that reproduces the experiment when fed
// back to `opsim run`.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
    ExperimentResult result;
    result.out_dir = resolve_output_dir(config.output_dir);
    std::filesystem::create_directories(result.out_dir);

    const Dataset ds = load_experiment_dataset(config);
    const DirectedGraph graph =
        generate_topology({config.nodes, config.max_extra_out_degree, config.topology_seed});

    std::map<AlgorithmKind, MixingMatrix> matrices;
    for (const AlgorithmKind algo : config.algorithms) {
        if (matrices.count(algo)) continue;
        PreparedMatrix pm = prepare_matrix(algo, graph);
        if (pm.augmented)
            result.notes.push_back(std::string(to_string(algo)) +
                                   ": mutual subgraph was not strongly connected; "
                                   "cycle edges symmetrized");
        matrices.emplace(algo, std::move(pm.matrix));
    }

    const LossSpec loss_spec{config.lambda};
    struct SeedData {
        StreamPartition stream;
        Vec comparator;
    };
    std::vector<SeedData> per_seed(config.seeds.size());
    for (std::size_t s = 0; s < config.seeds.size(); ++s) {
        SplitSpec split{config.stochastic_fraction, config.nodes, config.seeds[s],
                        config.cluster_iters};
        per_seed[s].stream = split_and_stream(ds, split, config.rounds);
        for (const auto& w : per_seed[s].stream.warnings)
            result.notes.push_back("seed " + std::to_string(config.seeds[s]) + ": " + w);
        std::vector<Sample> realized;
        realized.reserve(static_cast<std::size_t>(config.nodes) * config.rounds);
        for (const auto& node_stream : per_seed[s].stream.per_node)
            for (const auto& e : node_stream) realized.push_back(e.sample);
        per_seed[s].comparator = solve_comparator(realized, loss_spec, config.comparator_tol);
    }

    const std::string fingerprint = config.fingerprint();
    result.runs.resize(config.algorithms.size() * config.seeds.size());
    std::vector<std::function<void()>> jobs;
    for (std::size_t a = 0; a < config.algorithms.size(); ++a) {
        for (std::size_t s = 0; s < config.seeds.size(); ++s) {
            const std::size_t slot = a * config.seeds.size() + s;
            jobs.push_back([&, a, s, slot] {
                const AlgorithmKind algo = config.algorithms[a];
                RunConfig rc;
                rc.algorithm = algo;
                rc.gamma = config.gamma_for(algo);
                rc.rounds = config.rounds;
                rc.matrix = matrices.at(algo);
                rc.loss = loss_spec;
                rc.seed = config.seeds[s];
                rc.snapshot_stride = config.snapshot_stride;
                const Trajectory traj = run(rc, per_seed[s].stream);
                MetricsSeries series = compute_metrics(traj, per_seed[s].comparator, loss_spec,
                                                       per_seed[s].stream, fingerprint);
                RunSummary& summary = result.runs[slot];
                summary.algo = algo;
                summary.seed = config.seeds[s];
                summary.gamma = rc.gamma;
                if (!series.rows.empty()) {
                    const auto& last = series.rows.back();
                    summary.final_avg_loss = last.avg_loss;
                    summary.final_regret = last.cum_regret;
                    summary.final_consensus = last.consensus_error;
                }
                summary.csv_file = std::string(to_string(algo)) + "_seed" +
                                   std::to_string(config.seeds[s]) + ".csv";
                std::ostringstream csv;
                write_metrics_csv(csv, series, to_string(algo), config.seeds[s]);
                detail::atomic_write(result.out_dir / summary.csv_file, csv.str());
                summary.series = std::move(series);
            });
        }
    }
    detail::run_jobs(jobs, config.workers);

    std::ostringstream manifest;
    manifest << "# opsim manifest; feed this file back to `opsim run` to reproduce.\n";
    manifest << config.canonical_dump();
    manifest << "\n[manifest]\n";
    manifest << "fingerprint = " << fingerprint << '\n';
    manifest << "dataset_name = " << ds.name << '\n';
    manifest << "dataset_size = " << ds.samples.size() << '\n';
    manifest << "feature_dim = " << ds.d << '\n';
    for (std::size_t i = 0; i < result.notes.size(); ++i)
        manifest << "note_" << i << " = " << result.notes[i] << '\n';
    for (const auto& r : result.runs)
        manifest << "run = " << to_string(r.algo) << " seed=" << r.seed << " gamma="
                 << detail::format_double(r.gamma) << " csv=" << r.csv_file
                 << " final_avg_loss=" << detail::format_double(r.final_avg_loss)
                 << " final_regret=" << detail::format_double(r.final_regret)
                 << " final_consensus=" << detail::format_double(r.final_consensus) << '\n';
    result.manifest_file = "manifest.txt";
    detail::atomic_write(result.out_dir / result.manifest_file, manifest.str());
    return result;
}

// --- gamma tuning -----------------------------------------------------------

struct TuneEntry {
    AlgorithmKind algo;
    double gamma;
    double avg_loss;
    bool selected;
};

struct TuneResult {
    std::map<AlgorithmKind, double> winners;
    std::vector<TuneEntry> table;
};

inline std::vector<double> default_gamma_grid() {
    return {1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1, 2e-1, 5e-1, 1.0};
}

// Short-horizon (T/10) grid search per algorithm on the first seed's stream;
// the winner is the gamma with the smallest average loss, ties resolved
// toward the smaller gamma.
inline TuneResult tune_gammas(const ExperimentConfig& config) {
    std::vector<double> grid = config.gamma_grid.empty() ? default_gamma_grid() : config.gamma_grid;
    std::sort(grid.begin(), grid.end());

    const Dataset ds = load_experiment_dataset(config);
    const DirectedGraph graph =
        generate_topology({config.nodes, config.max_extra_out_degree, config.topology_seed});
    const int horizon = std::max(1, config.rounds / 10);
    SplitSpec split{config.stochastic_fraction, config.nodes, config.seeds.front(),
                    config.cluster_iters};
    const StreamPartition stream = split_and_stream(ds, split, horizon);
    const LossSpec loss_spec{config.lambda};

    TuneResult result;
    for (const AlgorithmKind algo : config.algorithms) {
        const PreparedMatrix pm = prepare_matrix(algo, graph);
        double best_loss = std::numeric_limits<double>::infinity();
        double best_gamma = grid.front();
        std::vector<TuneEntry> entries;
        for (const double gamma : grid) {
            RunConfig rc;
            rc.algorithm = algo;
            rc.gamma = gamma;
            rc.rounds = horizon;
            rc.matrix = pm.matrix;
            rc.loss = loss_spec;
            rc.seed = config.seeds.front();
            const Trajectory traj = run(rc, stream);
            const double avg = average_loss(traj, horizon);
            entries.push_back({algo, gamma, avg, false});
            if (avg < best_loss) {
                best_loss = avg;
                best_gamma = gamma;
            }
        }
        for (auto& e : entries) e.selected = e.gamma == best_gamma;
        result.winners[algo] = best_gamma;
        result.table.insert(result.table.end(), entries.begin(), entries.end());
    }
    return result;
}

inline std::string tune_table_csv(const TuneResult& tr) {
    std::ostringstream os;
    os << "algo,gamma,avg_loss,selected\n";
    for (const auto& e : tr.table)
        os << to_string(e.algo) << ',' << detail::format_double(e.gamma) << ','
           << detail::format_double(e.avg_loss) << ',' << (e.selected ? 1 : 0) << '\n';
    return os.str();
}

// --- CLI entry points -------------------------------------------------------

inline int cmd_run(const std::string& config_path) {
    ExperimentConfig config;
    try {
        config = ExperimentConfig::load(config_path);
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }
    try {
        const ExperimentResult result = run_experiment(config);
        for (const auto& r : result.runs)
            std::cout << to_string(r.algo) << " seed=" << r.seed
                      << " final_avg_loss=" << detail::format_double(r.final_avg_loss) << " ("
                      << r.csv_file << ")\n";
        std::cout << "manifest: " << (result.out_dir / result.manifest_file).string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << '\n';
        return 1;
    }
}

inline int cmd_sweep(const std::string& config_path, const std::string& axis) {
    ExperimentConfig config;
    std::vector<double> values;
    try {
        config = ExperimentConfig::load(config_path);
        if (axis == "network_size") values = config.network_sizes;
        else if (axis == "density") values = config.densities;
        else if (axis == "stochastic_fraction") values = config.stochastic_fractions;
        else throw ConfigError("unknown sweep axis '" + axis + "'");
        if (values.empty())
            throw ConfigError("config lists no values for sweep axis '" + axis + "'");
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }
    try {
        const std::filesystem::path root = resolve_output_dir(config.output_dir);
        std::filesystem::create_directories(root);
        std::ostringstream combined;
        combined << "axis_value,round,algo,seed,avg_loss,cum_regret,consensus_error\n";
        combined.precision(17);
        for (const double value : values) {
            ExperimentConfig sub = config;
            std::ostringstream tag;
            tag << axis << '_' << value;
            if (axis == "network_size") sub.nodes = static_cast<int>(value);
            else if (axis == "density")
                sub.max_extra_out_degree =
                    std::max(1, static_cast<int>(std::llround(value * config.nodes)));
            else sub.stochastic_fraction = value;
            sub.output_dir = (std::filesystem::path(config.output_dir) / tag.str()).string();
            const ExperimentResult result = run_experiment(sub);
            for (const auto& r : result.runs)
                for (const auto& row : r.series.rows)
                    combined << value << ',' << row.round << ',' << to_string(r.algo) << ','
                             << r.seed << ',' << row.avg_loss << ',' << row.cum_regret << ','
                             << row.consensus_error << '\n';
            std::cout << tag.str() << ": " << result.runs.size() << " runs\n";
        }
        detail::atomic_write(root / ("sweep_" + axis + ".csv"), combined.str());
        std::cout << "combined: " << (root / ("sweep_" + axis + ".csv")).string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "sweep failed: " << e.what() << '\n';
        return 1;
    }
}

// Accepts either a matrix file (first line n, then n rows) or a config file
// with a [topology] section, and prints the backward-product table.
inline int cmd_diagnose(const std::string& spec_path, int horizon) {
    MixingMatrix w;
    try {
        std::ifstream probe(spec_path);
        if (!probe) throw Error("cannot open " + spec_path);
        std::string first_line;
        std::getline(probe, first_line);
        probe.seekg(0);
        const bool is_config = first_line.find('[') != std::string::npos;
        if (is_config) {
            const ExperimentConfig config = ExperimentConfig::load(spec_path);
            w = build_row_stochastic(generate_topology(
                {config.nodes, config.max_extra_out_degree, config.topology_seed}));
        } else {
            w = load_matrix(probe);
        }
        if (w.size() > 64)
            throw ConfigError("diagnose computes dense matrix powers; n must be <= 64, got " +
                              std::to_string(w.size()));
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }

    try {
        const ProductDiagnostics diag = backward_product_diagnostics(w, horizon);
        bool vacuous = false;
        TheoryConstants consts;
        try {
            consts = theory_constants(w.size());
        } catch (const Overflow&) {
            vacuous = true;
        }
        std::cout << "n = " << w.size() << ", horizon = " << horizon << '\n';
        if (vacuous) std::cout << "theory bounds: vacuous (n^n overflows)\n";
        else
            std::cout << "C = " << consts.C << ", q = " << consts.q
                      << ", delta_min = " << consts.delta_min << '\n';
        std::cout << "lag,max_deviation,bound_Cq^lag,min_column_sum,delta_min\n";
        bool violated = false;
        for (int t = 1; t <= diag.horizon; ++t) {
            const double dev = diag.max_deviation_per_lag[t - 1];
            const double colsum = diag.min_colsum_per_lag[t - 1];
            std::cout << t << ',' << detail::format_double(dev) << ',';
            if (vacuous) {
                std::cout << "vacuous";
            } else {
                const double bound = consts.C * std::pow(consts.q, t);
                std::cout << detail::format_double(bound);
                if (dev > bound) violated = true;
                if (colsum < consts.delta_min * (1.0 - 1e-12)) violated = true;
            }
            std::cout << ',' << detail::format_double(colsum) << ','
                      << (vacuous ? "vacuous" : detail::format_double(consts.delta_min)) << '\n';
        }
        Vec wpsi = transpose_times(w.weights, diag.psi);
        std::cout << "psi fixed-point residual = "
                  << detail::format_double(std::sqrt(squared_distance(wpsi, diag.psi))) << '\n';
        if (violated) {
            std::cerr << "lemma bound violated\n";
            return 1;
        }
        return 0;
    } catch (const PreconditionError& e) {
        std::cerr << "precondition violated: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "diagnose failed: " << e.what() << '\n';
        return 1;
    }
}

inline int cmd_tune(const std::string& config_path, bool launch_full) {
    ExperimentConfig config;
    try {
        config = ExperimentConfig::load(config_path);
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }
    try {
        const TuneResult tr = tune_gammas(config);
        const std::filesystem::path out = resolve_output_dir(config.output_dir);
        std::filesystem::create_directories(out);
        detail::atomic_write(out / "tune_selection.csv", tune_table_csv(tr));
        for (const auto& [algo, gamma] : tr.winners)
            std::cout << to_string(algo) << ": gamma = " << detail::format_double(gamma) << '\n';
        std::cout << "selection table: " << (out / "tune_selection.csv").string() << '\n';
        if (launch_full) {
            ExperimentConfig full = config;
            full.gamma_overrides = tr.winners;
            const ExperimentResult result = run_experiment(full);
            std::cout << "full run manifest: " << (result.out_dir / result.manifest_file).string()
                      << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "tune failed: " << e.what() << '\n';
        return 1;
    }
}

} // namespace opsim
