#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "opsim/errors.hpp"
#include "opsim/loss.hpp"
#include "opsim/vec.hpp"

namespace opsim {

struct Dataset {
    std::vector<Sample> samples;
    int d = 0;
    std::string name;
};

namespace detail {

inline int map_binary_label(double raw, long line_no) {
    if (raw == 0.0 || raw == -1.0) return -1;
    if (raw == 1.0) return 1;
    throw ParseError("label must be one of {0, 1, -1, +1}, got " + std::to_string(raw), line_no);
}

// In-place per-coordinate standardization to zero mean / unit variance.
// Coordinates with variance below the floor collapse to zero.
inline void standardize(Dataset& ds) {
    if (ds.samples.empty()) return;
    const int d = ds.d;
    const double m = static_cast<double>(ds.samples.size());
    Vec mean(d, 0.0), var(d, 0.0);
    for (const auto& s : ds.samples)
        for (int j = 0; j < d; ++j) mean[j] += s.features[j];
    for (auto& v : mean) v /= m;
    for (const auto& s : ds.samples)
        for (int j = 0; j < d; ++j) {
            const double c = s.features[j] - mean[j];
            var[j] += c * c;
        }
    for (auto& v : var) v /= m;
    constexpr double kVarianceFloor = 1e-12;
    for (auto& s : ds.samples)
        for (int j = 0; j < d; ++j)
            s.features[j] = var[j] <= kVarianceFloor ? 0.0 : (s.features[j] - mean[j]) / std::sqrt(var[j]);
}

inline bool parse_double(const std::string& tok, double& out) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end != begin && *end == '\0';
}

} // namespace detail

// LIBSVM text format: `label idx:val idx:val ...`, 1-based sparse indices.
// Labels {0,1} or {-1,+1}; zero maps to -1. Features are standardized after
// loading. Ingestion stops at sample_budget rows.
inline Dataset load_libsvm(const std::string& path, std::size_t sample_budget = 100000) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    Dataset ds;
    ds.name = std::filesystem::path(path).stem().string();
    std::vector<std::vector<std::pair<int, double>>> sparse;
    std::vector<int> labels;
    int max_index = 0;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line) && sparse.size() < sample_budget) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;
        double raw_label;
        if (!detail::parse_double(tok, raw_label)) throw ParseError("bad label '" + tok + "'", line_no);
        labels.push_back(detail::map_binary_label(raw_label, line_no));
        std::vector<std::pair<int, double>> row;
        while (ls >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) throw ParseError("expected idx:val, got '" + tok + "'", line_no);
            double idx_raw, val;
            if (!detail::parse_double(tok.substr(0, colon), idx_raw) || idx_raw < 1 ||
                idx_raw != std::floor(idx_raw))
                throw ParseError("bad feature index in '" + tok + "'", line_no);
            if (!detail::parse_double(tok.substr(colon + 1), val))
                throw ParseError("bad feature value in '" + tok + "'", line_no);
            const int idx = static_cast<int>(idx_raw);
            max_index = std::max(max_index, idx);
            row.emplace_back(idx - 1, val);
        }
        sparse.push_back(std::move(row));
    }
    if (sparse.empty()) throw EmptyFile(path + " contains no samples");
    ds.d = max_index;
    ds.samples.reserve(sparse.size());
    for (std::size_t i = 0; i < sparse.size(); ++i) {
        Sample s;
        s.label = labels[i];
        s.features.assign(ds.d, 0.0);
        for (const auto& [j, v] : sparse[i]) s.features[j] = v;
        ds.samples.push_back(std::move(s));
    }
    detail::standardize(ds);
    return ds;
}

// CSV with a header row. All columns except the label must be numeric;
// non-numeric ones are dropped with a warning. Labels {0,1} or {-1,+1}.
inline Dataset load_csv(const std::string& path, const std::string& label_column,
                        std::size_t sample_budget = 100000,
                        std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);

    auto split_row = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            std::size_t b = cell.find_first_not_of(' ');
            if (b == std::string::npos) b = cell.size();
            cell.erase(0, b);
            if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"')
                cell = cell.substr(1, cell.size() - 2);
            cells.push_back(cell);
        }
        return cells;
    };

    std::string line;
    if (!std::getline(in, line)) throw EmptyFile(path + " is empty");
    const std::vector<std::string> header = split_row(line);
    int label_idx = -1;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == label_column) label_idx = static_cast<int>(j);
    if (label_idx < 0) throw MissingColumn("no column named '" + label_column + "' in " + path);

    std::vector<std::vector<std::string>> rows;
    long line_no = 1;
    while (std::getline(in, line) && rows.size() < sample_budget) {
        ++line_no;
        if (line.find_first_not_of(" \t\r,") == std::string::npos) continue;
        auto cells = split_row(line);
        if (cells.size() != header.size())
            throw ParseError("row has " + std::to_string(cells.size()) + " cells, header has " +
                             std::to_string(header.size()), line_no);
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw EmptyFile(path + " has a header but no data rows");

    // A feature column survives only if every cell parses as a number.
    std::vector<int> feature_cols;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (static_cast<int>(j) == label_idx) continue;
        bool numeric = true;
        double tmp;
        for (const auto& row : rows)
            if (!detail::parse_double(row[j], tmp)) {
                numeric = false;
                break;
            }
        if (numeric) {
            feature_cols.push_back(static_cast<int>(j));
        } else if (warnings) {
            warnings->push_back("dropping non-numeric column '" + header[j] + "'");
        }
    }
    if (feature_cols.empty()) throw Error(path + ": no numeric feature columns");

    Dataset ds;
    ds.name = std::filesystem::path(path).stem().string();
    ds.d = static_cast<int>(feature_cols.size());
    ds.samples.reserve(rows.size());
    long row_line = 1;
    for (const auto& row : rows) {
        ++row_line;
        Sample s;
        double raw_label;
        if (!detail::parse_double(row[label_idx], raw_label))
            throw ParseError("bad label '" + row[label_idx] + "'", row_line);
        s.label = detail::map_binary_label(raw_label, row_line);
        s.features.resize(ds.d);
        for (int j = 0; j < ds.d; ++j) {
            double v;
            detail::parse_double(row[feature_cols[j]], v);
            s.features[j] = v;
        }
        ds.samples.push_back(std::move(s));
    }
    detail::standardize(ds);
    return ds;
}

// Gaussian features with labels from a planted logistic model; the desk-scale
// stand-in task. planted (if given) receives the ground-truth weights.
inline Dataset synthetic_dataset(int n_samples, int d, std::uint64_t seed, Vec* planted = nullptr) {
    if (n_samples < 2 || d < 1) throw Error("synthetic_dataset: need n_samples >= 2, d >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vec w(d);
    for (auto& v : w) v = normal(rng);
    const double norm = l2_norm(w);
    for (auto& v : w) v *= 3.0 / norm; // fixed signal strength
    Dataset ds;
    ds.name = "synthetic";
    ds.d = d;
    ds.samples.resize(n_samples);
    for (auto& s : ds.samples) {
        s.features.resize(d);
        for (auto& f : s.features) f = normal(rng);
        const double p = detail::sigmoid(dot(w, s.features));
        s.label = unif(rng) < p ? 1 : -1;
    }
    if (planted) *planted = std::move(w);
    return ds;
}

enum class SampleSource { stochastic, adversarial };

struct StreamEntry {
    Sample sample;
    SampleSource source = SampleSource::stochastic;
};

struct SplitSpec {
    double stochastic_fraction = 1.0;
    int n = 1;
    std::uint64_t seed = 0;
    int cluster_iters = 50;
};

// Result of the stochastic/adversarial split before streaming: the shared
// stochastic pool and each node's clustered adversarial slice.
struct SplitPools {
    std::vector<Sample> stochastic_pool;
    std::vector<std::vector<Sample>> node_adversarial;
    std::vector<std::string> warnings;
};

// Per-node round-indexed streams: per_node[i][t] is the one sample node i
// sees at round t.
struct StreamPartition {
    int n = 0;
    int rounds = 0;
    int d = 0;
    std::vector<std::vector<StreamEntry>> per_node;
    std::vector<std::string> warnings;

    const Sample& at(int node, int round) const { return per_node[node][round].sample; }
};

namespace detail {

// Lloyd's algorithm with k-means++ seeding. Returns per-point cluster ids.
inline std::vector<int> kmeans(const std::vector<Sample>& points, int k, int iters,
                               std::mt19937_64& rng, std::vector<Vec>* centroids_out = nullptr) {
    const int m = static_cast<int>(points.size());
    const int d = m > 0 ? static_cast<int>(points.front().features.size()) : 0;
    std::vector<Vec> centroids;
    centroids.reserve(k);

    // k-means++: first centroid uniform, then proportional to squared distance.
    std::uniform_int_distribution<int> first(0, m - 1);
    centroids.push_back(points[first(rng)].features);
    Vec d2(m);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < m; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& ctr : centroids)
                best = std::min(best, squared_distance(points[i].features, ctr));
            d2[i] = best;
            total += best;
        }
        int pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng), acc = 0.0;
            for (int i = 0; i < m; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);
        }
        centroids.push_back(points[pick].features);
    }

    std::vector<int> assign(m, 0), prev(m, -1);
    for (int it = 0; it < iters; ++it) {
        for (int i = 0; i < m; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int c = 0; c < k; ++c) {
                const double dist = squared_distance(points[i].features, centroids[c]);
                if (dist < best) {
                    best = dist;
                    arg = c;
                }
            }
            assign[i] = arg;
        }
        if (assign == prev) break; // fixed point; more iterations change nothing
        prev = assign;
        std::vector<int> count(k, 0);
        std::vector<Vec> sums(k, Vec(d, 0.0));
        for (int i = 0; i < m; ++i) {
            ++count[assign[i]];
            axpy(1.0, points[i].features, sums[assign[i]]);
        }
        for (int c = 0; c < k; ++c)
            if (count[c] > 0) {
                for (int j = 0; j < d; ++j) centroids[c][j] = sums[c][j] / count[c];
            } // empty clusters keep their previous centroid
    }
    if (centroids_out) *centroids_out = std::move(centroids);
    return assign;
}

} // namespace detail

// Seeded shuffle, stochastic/adversarial pool cut, and k-means clustering of
// the adversarial pool into one slice per node (clusters ordered by centroid
// norm). Empty clusters fall back to the nearest populated one, with a
// warning.
inline SplitPools split_pools(const Dataset& ds, const SplitSpec& spec) {
    if (spec.n < 1) throw Error("split_pools: n must be >= 1");
    if (ds.samples.empty()) throw EmptyDataset("split_pools: dataset is empty");
    std::mt19937_64 rng(derive_seed(spec.seed, 0x5117));
    std::vector<Sample> shuffled = ds.samples;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);

    const auto total = static_cast<double>(shuffled.size());
    const auto n_stoch = static_cast<std::size_t>(
        std::min(total, std::ceil(spec.stochastic_fraction * total)));
    SplitPools pools;
    pools.stochastic_pool.assign(shuffled.begin(), shuffled.begin() + n_stoch);
    std::vector<Sample> adversarial(shuffled.begin() + n_stoch, shuffled.end());
    pools.node_adversarial.resize(spec.n);
    if (adversarial.empty()) return pools;

    std::vector<Vec> centroids;
    const auto assign = detail::kmeans(adversarial, spec.n, spec.cluster_iters, rng, &centroids);

    // Deterministic cluster -> node map: ascending centroid norm.
    std::vector<int> order(spec.n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> norms(spec.n);
    for (int c = 0; c < spec.n; ++c) norms[c] = l2_norm(centroids[c]);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return norms[a] < norms[b]; });
    std::vector<int> cluster_to_node(spec.n);
    for (int node = 0; node < spec.n; ++node) cluster_to_node[order[node]] = node;

    for (std::size_t i = 0; i < adversarial.size(); ++i)
        pools.node_adversarial[cluster_to_node[assign[i]]].push_back(adversarial[i]);

    for (int node = 0; node < spec.n; ++node) {
        if (!pools.node_adversarial[node].empty()) continue;
        const int cluster = order[node];
        double best = std::numeric_limits<double>::infinity();
        int donor = -1;
        for (int c = 0; c < spec.n; ++c) {
            if (pools.node_adversarial[cluster_to_node[c]].empty()) continue;
            const double dist = squared_distance(centroids[cluster], centroids[c]);
            if (dist < best) {
                best = dist;
                donor = cluster_to_node[c];
            }
        }
        if (donor < 0) throw InsufficientData("adversarial pool produced no usable cluster");
        pools.node_adversarial[node] = pools.node_adversarial[donor];
        pools.warnings.push_back("node " + std::to_string(node) +
                                 " had an empty adversarial cluster; sharing node " +
                                 std::to_string(donor) + "'s slice");
    }
    return pools;
}

// Builds the per-node streams: each round is either a with-replacement draw
// from the shared stochastic pool or the next sample of the node's own
// adversarial slice (cycled with reshuffling), in exact proportion
// fraction : (1 - fraction) via a seeded per-node schedule.
inline StreamPartition split_and_stream(const Dataset& ds, const SplitSpec& spec, int rounds) {
    if (rounds < 0) throw Error("split_and_stream: negative round count");
    SplitPools pools = split_pools(ds, spec);

    StreamPartition part;
    part.n = spec.n;
    part.rounds = rounds;
    part.d = ds.d;
    part.warnings = pools.warnings;
    part.per_node.resize(spec.n);

    const int stoch_rounds = static_cast<int>(
        std::min<long long>(rounds, std::llround(spec.stochastic_fraction * rounds)));
    if (stoch_rounds > 0 && pools.stochastic_pool.empty())
        throw InsufficientData("schedule needs stochastic draws but the stochastic pool is empty");
    const bool needs_adversarial = stoch_rounds < rounds;

    for (int node = 0; node < spec.n; ++node) {
        std::mt19937_64 rng(derive_seed(spec.seed, 0x40d0 + static_cast<std::uint64_t>(node)));
        std::vector<char> tags(rounds, 0);
        std::fill(tags.begin(), tags.begin() + stoch_rounds, 1);
        std::shuffle(tags.begin(), tags.end(), rng);

        const auto& slice = pools.node_adversarial[node];
        if (needs_adversarial && slice.empty())
            throw InsufficientData("node " + std::to_string(node) + " has no adversarial samples");
        std::vector<int> adv_order(slice.size());
        std::iota(adv_order.begin(), adv_order.end(), 0);
        std::size_t adv_pos = adv_order.size(); // forces an initial shuffle

        auto& stream = part.per_node[node];
        stream.reserve(rounds);
        std::uniform_int_distribution<std::size_t> draw(
            0, pools.stochastic_pool.empty() ? 0 : pools.stochastic_pool.size() - 1);
        for (int t = 0; t < rounds; ++t) {
            StreamEntry e;
            if (tags[t]) {
                e.source = SampleSource::stochastic;
                e.sample = pools.stochastic_pool[draw(rng)];
            } else {
                if (adv_pos == adv_order.size()) {
                    std::shuffle(adv_order.begin(), adv_order.end(), rng);
                    adv_pos = 0;
                }
                e.source = SampleSource::adversarial;
                e.sample = slice[adv_order[adv_pos++]];
            }
            stream.push_back(std::move(e));
        }
    }
    return part;
}

// Audit export: one CSV per node under dir, columns round,source,label,f0...
inline void export_stream(const StreamPartition& part, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (int node = 0; node < part.n; ++node) {
        std::ostringstream name;
        name << "node_" << node << ".csv";
        std::ofstream out(std::filesystem::path(dir) / name.str());
        out << "round,source,label";
        for (int j = 0; j < part.d; ++j) out << ",f" << j;
        out << '\n';
        out.precision(17);
        for (int t = 0; t < part.rounds; ++t) {
            const auto& e = part.per_node[node][t];
            out << (t + 1) << ','
                << (e.source == SampleSource::stochastic ? "stochastic" : "adversarial") << ','
                << e.sample.label;
            for (double f : e.sample.features) out << ',' << f;
            out << '\n';
        }
    }
}

} // namespace opsim
