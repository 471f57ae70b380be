#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "opsim/errors.hpp"
#include "opsim/vec.hpp"

namespace opsim {

// Directed trust topology. out_neighbors[i] is the ordered (ascending) list
// of nodes i sends to; by construction every node appears in its own list.
struct DirectedGraph {
    int n = 0;
    std::vector<std::vector<int>> out_neighbors;

    bool has_edge(int from, int to) const {
        const auto& nb = out_neighbors[from];
        return std::binary_search(nb.begin(), nb.end(), to);
    }

    int edge_count() const {
        int e = 0;
        for (const auto& nb : out_neighbors) e += static_cast<int>(nb.size());
        return e;
    }

    bool operator==(const DirectedGraph& other) const = default;
};

struct TopologySpec {
    int n = 1;
    int max_extra_out_degree = 0; // upper bound B on extra random out-edges
    std::uint64_t seed = 0;
};

// Random digraph with guaranteed strong connectivity: every node gets a
// self-loop, the cycle edge i -> (i+1 mod n), and k_i extra out-edges with
// k_i drawn uniformly from {0, ..., B-1} (duplicates collapse).
inline DirectedGraph generate_topology(const TopologySpec& spec) {
    if (spec.n < 1) throw Error("generate_topology: node count must be >= 1");
    const int n = spec.n;
    std::mt19937_64 rng(spec.seed);
    DirectedGraph g;
    g.n = n;
    g.out_neighbors.resize(n);
    std::vector<char> mark(n, 0);
    for (int i = 0; i < n; ++i) {
        std::fill(mark.begin(), mark.end(), 0);
        mark[i] = 1;
        mark[(i + 1) % n] = 1;
        if (spec.max_extra_out_degree > 0) {
            std::uniform_int_distribution<int> extra_count(0, spec.max_extra_out_degree - 1);
            std::uniform_int_distribution<int> pick(0, n - 1);
            const int k = extra_count(rng);
            for (int e = 0; e < k; ++e) mark[pick(rng)] = 1;
        }
        auto& nb = g.out_neighbors[i];
        for (int j = 0; j < n; ++j)
            if (mark[j]) nb.push_back(j);
    }
    return g;
}

// Tarjan's algorithm, iterative form (explicit stack so deep cycles do not
// blow the call stack). True iff the whole graph is one strongly connected
// component.
inline bool is_strongly_connected(const DirectedGraph& g) {
    const int n = g.n;
    if (n <= 1) return true;
    std::vector<int> index(n, -1), lowlink(n, 0);
    std::vector<char> on_stack(n, 0);
    std::vector<int> scc_stack;
    int next_index = 0;
    int scc_count = 0;

    struct Frame {
        int v;
        std::size_t child;
    };
    std::vector<Frame> call;

    for (int root = 0; root < n; ++root) {
        if (index[root] != -1) continue;
        call.push_back({root, 0});
        index[root] = lowlink[root] = next_index++;
        scc_stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            Frame& f = call.back();
            const auto& nb = g.out_neighbors[f.v];
            if (f.child < nb.size()) {
                const int w = nb[f.child++];
                if (index[w] == -1) {
                    index[w] = lowlink[w] = next_index++;
                    scc_stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    lowlink[f.v] = std::min(lowlink[f.v], index[w]);
                }
            } else {
                if (lowlink[f.v] == index[f.v]) {
                    ++scc_count;
                    if (scc_count > 1) return false;
                    int w;
                    do {
                        w = scc_stack.back();
                        scc_stack.pop_back();
                        on_stack[w] = 0;
                    } while (w != f.v);
                }
                const int v = f.v;
                call.pop_back();
                if (!call.empty()) lowlink[call.back().v] = std::min(lowlink[call.back().v], lowlink[v]);
            }
        }
    }
    // One component, and it must cover every node (it does: we visited all).
    return scc_count == 1;
}

// Keeps edge (i,j) iff both (i,j) and (j,i) exist. Self-loops survive.
// The result can be disconnected; callers decide what to do about that.
inline DirectedGraph mutual_subgraph(const DirectedGraph& g) {
    DirectedGraph m;
    m.n = g.n;
    m.out_neighbors.resize(g.n);
    for (int i = 0; i < g.n; ++i)
        for (int j : g.out_neighbors[i])
            if (j == i || g.has_edge(j, i)) m.out_neighbors[i].push_back(j);
    return m;
}

// Adjacency-list text: one line per node, "<node_id>: <out-neighbors>".
inline void write_graph(std::ostream& os, const DirectedGraph& g) {
    for (int i = 0; i < g.n; ++i) {
        os << i << ':';
        for (int j : g.out_neighbors[i]) os << ' ' << j;
        os << '\n';
    }
}

inline DirectedGraph read_graph(std::istream& is) {
    DirectedGraph g;
    std::string line;
    long line_no = 0;
    std::vector<std::vector<int>> rows;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) throw ParseError("expected '<id>: ...'", line_no);
        int id;
        try {
            id = std::stoi(line.substr(0, colon));
        } catch (const std::exception&) {
            throw ParseError("bad node id", line_no);
        }
        if (id != static_cast<int>(rows.size())) throw ParseError("node ids must be dense and in order", line_no);
        std::istringstream rest(line.substr(colon + 1));
        std::vector<int> nb;
        int j;
        while (rest >> j) nb.push_back(j);
        if (!rest.eof()) throw ParseError("bad neighbor token", line_no);
        rows.push_back(std::move(nb));
    }
    if (rows.empty()) throw EmptyFile("graph file has no nodes");
    g.n = static_cast<int>(rows.size());
    for (auto& nb : rows)
        for (int j : nb)
            if (j < 0 || j >= g.n) throw ValidationError("neighbor id out of range: " + std::to_string(j));
    g.out_neighbors = std::move(rows);
    return g;
}

} // namespace opsim
