#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "opsim/engine.hpp"
#include "opsim/errors.hpp"

namespace opsim {

// Flat `key = value` pairs under [section] headers. '#' starts a comment.
// Unknown sections are ignored (manifests stash extra info there); unknown
// keys inside known sections are rejected so typos cannot silently change an
// experiment.
class ConfigFile {
public:
    static ConfigFile parse(std::istream& is) {
        ConfigFile cf;
        std::string line, section;
        long line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto strip = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                if (b == std::string::npos) return std::string();
                const auto e = s.find_last_not_of(" \t\r");
                return s.substr(b, e - b + 1);
            };
            line = strip(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ParseError("unterminated section header", line_no);
                section = strip(line.substr(1, line.size() - 2));
                cf.sections_.insert(section);
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
            const std::string key = strip(line.substr(0, eq));
            if (key.empty()) throw ParseError("empty key", line_no);
            cf.values_[section + "." + key] = strip(line.substr(eq + 1));
        }
        return cf;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open config file " + path);
        return parse(in);
    }

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return std::nullopt;
        consumed_.insert(section + "." + key);
        return it->second;
    }

    bool has_section(const std::string& section) const { return sections_.count(section) > 0; }

    // Keys never consumed, restricted to the given known sections.
    std::vector<std::string> unconsumed(const std::set<std::string>& known_sections) const {
        std::vector<std::string> extra;
        for (const auto& [k, v] : values_) {
            const auto dotpos = k.find('.');
            if (!known_sections.count(k.substr(0, dotpos))) continue;
            if (!consumed_.count(k)) extra.push_back(k);
        }
        return extra;
    }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> sections_;
    mutable std::set<std::string> consumed_;
};

namespace detail {

// Typed accessors that collect problems instead of throwing one at a time.
class ConfigReader {
public:
    ConfigReader(const ConfigFile& cf, std::vector<std::string>& errors)
        : cf_(cf), errors_(errors) {}

    std::string get_string(const std::string& sec, const std::string& key,
                           const std::string& def) {
        return cf_.raw(sec, key).value_or(def);
    }

    double get_double(const std::string& sec, const std::string& key, double def) {
        const auto v = cf_.raw(sec, key);
        if (!v || v->empty()) return def;
        double out;
        if (!parse_double(*v, out)) {
            errors_.push_back(sec + "." + key + ": not a number: '" + *v + "'");
            return def;
        }
        return out;
    }

    long long get_int(const std::string& sec, const std::string& key, long long def) {
        const double d = get_double(sec, key, static_cast<double>(def));
        return static_cast<long long>(d);
    }

    std::uint64_t get_u64(const std::string& sec, const std::string& key, std::uint64_t def) {
        const auto v = cf_.raw(sec, key);
        if (!v || v->empty()) return def;
        try {
            return std::stoull(*v);
        } catch (const std::exception&) {
            errors_.push_back(sec + "." + key + ": not an unsigned integer: '" + *v + "'");
            return def;
        }
    }

    std::vector<std::string> get_list(const std::string& sec, const std::string& key) {
        const auto v = cf_.raw(sec, key);
        std::vector<std::string> items;
        if (!v) return items;
        std::istringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(" \t");
            if (b == std::string::npos) continue;
            const auto e = item.find_last_not_of(" \t");
            items.push_back(item.substr(b, e - b + 1));
        }
        return items;
    }

    std::vector<double> get_double_list(const std::string& sec, const std::string& key) {
        std::vector<double> out;
        for (const auto& item : get_list(sec, key)) {
            double d;
            if (!parse_double(item, d)) {
                errors_.push_back(sec + "." + key + ": not a number: '" + item + "'");
                continue;
            }
            out.push_back(d);
        }
        return out;
    }

private:
    const ConfigFile& cf_;
    std::vector<std::string>& errors_;
};

inline std::optional<AlgorithmKind> algorithm_from_string(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "ops") return AlgorithmKind::ops;
    if (s == "dol_symm" || s == "dol-symm") return AlgorithmKind::dol_symm;
    if (s == "dol_asymm" || s == "dol-asymm") return AlgorithmKind::dol_asymm;
    if (s == "col") return AlgorithmKind::col;
    if (s == "local_ogd" || s == "local-ogd" || s == "local") return AlgorithmKind::local_ogd;
    return std::nullopt;
}

} // namespace detail

enum class DataKind { synthetic, libsvm, csv };

inline const char* to_string(DataKind k) {
    switch (k) {
        case DataKind::synthetic: return "synthetic";
        case DataKind::libsvm: return "libsvm";
        case DataKind::csv: return "csv";
    }
    return "?";
}

// Fully resolved experiment description. `canonical_dump()` emits it back as
// config text, which doubles as the reproducibility manifest body.
struct ExperimentConfig {
    // [dataset]
    DataKind data_kind = DataKind::synthetic;
    std::string data_path;
    std::string label_column;
    std::size_t sample_budget = 100000;
    int synth_samples = 4000;
    int synth_dim = 8;
    std::uint64_t data_seed = 1;

    // [split]
    double stochastic_fraction = 1.0;
    int cluster_iters = 50;

    // [topology]
    int nodes = 8;
    int max_extra_out_degree = 4;
    std::uint64_t topology_seed = 42;

    // [run]
    std::vector<AlgorithmKind> algorithms{AlgorithmKind::ops};
    double gamma = 0.1;
    std::map<AlgorithmKind, double> gamma_overrides; // per-algorithm, e.g. from tuning
    std::vector<double> gamma_grid;
    int rounds = 200;
    std::vector<std::uint64_t> seeds{1};
    int snapshot_stride = 0;
    double lambda = 1e-4;
    double comparator_tol = 1e-5;
    double bounds_radius = 10.0;
    int workers = 0; // 0 = hardware concurrency
    std::string output_dir = "out";

    // [sweep]
    std::vector<double> network_sizes;
    std::vector<double> densities;
    std::vector<double> stochastic_fractions;

    double gamma_for(AlgorithmKind a) const {
        const auto it = gamma_overrides.find(a);
        return it == gamma_overrides.end() ? gamma : it->second;
    }

    static ExperimentConfig from_file(const ConfigFile& cf) {
        std::vector<std::string> errors;
        detail::ConfigReader r(cf, errors);
        ExperimentConfig c;

        const std::string kind = r.get_string("dataset", "kind", "synthetic");
        if (kind == "synthetic") c.data_kind = DataKind::synthetic;
        else if (kind == "libsvm") c.data_kind = DataKind::libsvm;
        else if (kind == "csv") c.data_kind = DataKind::csv;
        else errors.push_back("dataset.kind: unknown kind '" + kind + "'");
        c.data_path = r.get_string("dataset", "path", "");
        c.label_column = r.get_string("dataset", "label_column", "");
        c.sample_budget = static_cast<std::size_t>(r.get_int("dataset", "sample_budget", 100000));
        c.synth_samples = static_cast<int>(r.get_int("dataset", "samples", 4000));
        c.synth_dim = static_cast<int>(r.get_int("dataset", "dim", 8));
        c.data_seed = r.get_u64("dataset", "data_seed", 1);

        c.stochastic_fraction = r.get_double("split", "stochastic_fraction", 1.0);
        c.cluster_iters = static_cast<int>(r.get_int("split", "cluster_iters", 50));

        c.nodes = static_cast<int>(r.get_int("topology", "nodes", 8));
        c.max_extra_out_degree = static_cast<int>(r.get_int("topology", "max_extra_out_degree", 4));
        c.topology_seed = r.get_u64("topology", "topology_seed", 42);

        c.algorithms.clear();
        auto algo_items = r.get_list("run", "algorithms");
        if (algo_items.empty()) algo_items = {"ops"};
        for (const auto& item : algo_items) {
            const auto a = detail::algorithm_from_string(item);
            if (!a) errors.push_back("run.algorithms: unknown algorithm '" + item + "'");
            else c.algorithms.push_back(*a);
        }
        c.gamma = r.get_double("run", "gamma", 0.1);
        for (const AlgorithmKind a : {AlgorithmKind::ops, AlgorithmKind::dol_symm,
                                      AlgorithmKind::dol_asymm, AlgorithmKind::col,
                                      AlgorithmKind::local_ogd}) {
            const std::string key = std::string("gamma_") + to_string(a);
            const double v = r.get_double("run", key, -1.0);
            if (v > 0.0) c.gamma_overrides[a] = v;
        }
        c.gamma_grid = r.get_double_list("run", "gamma_grid");
        c.rounds = static_cast<int>(r.get_int("run", "rounds", 200));
        c.seeds.clear();
        for (const auto& s : r.get_list("run", "seeds")) {
            try {
                c.seeds.push_back(std::stoull(s));
            } catch (const std::exception&) {
                errors.push_back("run.seeds: not an unsigned integer: '" + s + "'");
            }
        }
        if (c.seeds.empty()) c.seeds = {1};
        c.snapshot_stride = static_cast<int>(r.get_int("run", "snapshot_stride", 0));
        c.lambda = r.get_double("run", "lambda", 1e-4);
        c.comparator_tol = r.get_double("run", "comparator_tol", 1e-5);
        c.bounds_radius = r.get_double("run", "bounds_radius", 10.0);
        c.workers = static_cast<int>(r.get_int("run", "workers", 0));
        c.output_dir = r.get_string("run", "output_dir", "out");

        c.network_sizes = r.get_double_list("sweep", "network_sizes");
        c.densities = r.get_double_list("sweep", "densities");
        c.stochastic_fractions = r.get_double_list("sweep", "stochastic_fractions");

        // Semantic checks.
        if (c.data_kind != DataKind::synthetic && c.data_path.empty())
            errors.push_back("dataset.path: required for kind " + kind);
        if (c.data_kind == DataKind::csv && c.label_column.empty())
            errors.push_back("dataset.label_column: required for csv datasets");
        if (c.data_kind == DataKind::synthetic && c.synth_samples < 2)
            errors.push_back("dataset.samples: must be >= 2");
        if (c.stochastic_fraction < 0.0 || c.stochastic_fraction > 1.0)
            errors.push_back("split.stochastic_fraction: must be in [0, 1]");
        if (c.cluster_iters < 1) errors.push_back("split.cluster_iters: must be >= 1");
        if (c.nodes < 1) errors.push_back("topology.nodes: must be >= 1");
        if (c.max_extra_out_degree < 0)
            errors.push_back("topology.max_extra_out_degree: must be >= 0");
        if (c.gamma <= 0.0) errors.push_back("run.gamma: must be positive");
        if (c.rounds < 1) errors.push_back("run.rounds: must be >= 1");
        if (c.lambda < 0.0) errors.push_back("run.lambda: must be >= 0");
        if (c.comparator_tol <= 0.0) errors.push_back("run.comparator_tol: must be positive");
        if (c.output_dir.empty()) errors.push_back("run.output_dir: must not be empty");

        for (const auto& key : cf.unconsumed({"dataset", "split", "topology", "run", "sweep"}))
            errors.push_back("unknown key: " + key);

        if (!errors.empty()) {
            std::string msg = "configuration rejected:";
            for (const auto& e : errors) msg += "\n  - " + e;
            throw ConfigError(msg);
        }
        return c;
    }

    static ExperimentConfig load(const std::string& path) {
        return from_file(ConfigFile::load(path));
    }

    std::string canonical_dump() const {
        std::ostringstream os;
        os.precision(17);
        os << "[dataset]\n";
        os << "kind = " << to_string(data_kind) << '\n';
        os << "path = " << data_path << '\n';
        os << "label_column = " << label_column << '\n';
        os << "sample_budget = " << sample_budget << '\n';
        os << "samples = " << synth_samples << '\n';
        os << "dim = " << synth_dim << '\n';
        os << "data_seed = " << data_seed << '\n';
        os << "\n[split]\n";
        os << "stochastic_fraction = " << stochastic_fraction << '\n';
        os << "cluster_iters = " << cluster_iters << '\n';
        os << "\n[topology]\n";
        os << "nodes = " << nodes << '\n';
        os << "max_extra_out_degree = " << max_extra_out_degree << '\n';
        os << "topology_seed = " << topology_seed << '\n';
        os << "\n[run]\n";
        os << "algorithms = ";
        for (std::size_t i = 0; i < algorithms.size(); ++i)
            os << (i ? "," : "") << to_string(algorithms[i]);
        os << '\n';
        os << "gamma = " << gamma << '\n';
        for (const auto& [a, g] : gamma_overrides) os << "gamma_" << to_string(a) << " = " << g << '\n';
        if (!gamma_grid.empty()) {
            os << "gamma_grid = ";
            for (std::size_t i = 0; i < gamma_grid.size(); ++i) os << (i ? "," : "") << gamma_grid[i];
            os << '\n';
        }
        os << "rounds = " << rounds << '\n';
        os << "seeds = ";
        for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
        os << '\n';
        os << "snapshot_stride = " << snapshot_stride << '\n';
        os << "lambda = " << lambda << '\n';
        os << "comparator_tol = " << comparator_tol << '\n';
        os << "bounds_radius = " << bounds_radius << '\n';
        os << "workers = " << workers << '\n';
        os << "output_dir = " << output_dir << '\n';
        auto dump_list = [&os](const char* key, const std::vector<double>& v) {
            if (v.empty()) return;
            os << key << " = ";
            for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
            os << '\n';
        };
        if (!network_sizes.empty() || !densities.empty() || !stochastic_fractions.empty()) {
            os << "\n[sweep]\n";
            dump_list("network_sizes", network_sizes);
            dump_list("densities", densities);
            dump_list("stochastic_fractions", stochastic_fractions);
        }
        return os.str();
    }

    // FNV-1a over the canonical dump; stable identifier for manifests/CSVs.
    std::string fingerprint() const {
        std::uint64_t h = 1469598103934665603ULL;
        for (const unsigned char c : canonical_dump()) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        std::ostringstream os;
        os << std::hex << h;
        return os.str();
    }
};

} // namespace opsim
