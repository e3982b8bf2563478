#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "fairdiv/core.hpp"

namespace fairdiv {

// Directed envy graph over agents: edge (i,j) iff i values j's bundle above
// its own under the current (possibly partial) allocation. Recomputable from
// scratch at any step; unassigned items use owner = -1.
struct EnvyGraph {
    int n = 0;
    std::vector<char> adj; // n*n, adj[i*n+j] = 1 iff i envies j

    bool edge(int i, int j) const { return adj[static_cast<std::size_t>(i) * n + j] != 0; }

    int in_degree(int j) const {
        int d = 0;
        for (int i = 0; i < n; ++i) d += edge(i, j) ? 1 : 0;
        return d;
    }
};

namespace detail {

// owner may contain -1 for unassigned items.
inline std::vector<double> partial_bundle_values(const Instance& inst,
                                                 const std::vector<int>& owner, int viewer) {
    std::vector<double> v(inst.agents(), 0.0);
    for (int k = 0; k < inst.items(); ++k)
        if (owner[k] >= 0) v[owner[k]] += inst.value(k, viewer);
    return v;
}

} // namespace detail

inline EnvyGraph build_envy_graph(const Instance& inst, const std::vector<int>& owner) {
    EnvyGraph g;
    g.n = inst.agents();
    g.adj.assign(static_cast<std::size_t>(g.n) * g.n, 0);
    for (int i = 0; i < g.n; ++i) {
        const std::vector<double> v = detail::partial_bundle_values(inst, owner, i);
        for (int j = 0; j < g.n; ++j) {
            if (i == j) continue;
            if (v[i] < v[j]) g.adj[static_cast<std::size_t>(i) * g.n + j] = 1;
        }
    }
    return g;
}

// Round-robin picking: agents take turns in `order` (default 0..n-1); each
// turn takes the highest-valued unassigned item, ties by lowest item index.
// An agent whose remaining items are all worth 0 still takes the
// lowest-index one, so items are always exhausted.
inline DiscreteAllocation round_robin(const Instance& inst,
                                      std::optional<std::vector<int>> order = std::nullopt) {
    const int n = inst.agents();
    const int m = inst.items();
    std::vector<int> turn = order ? std::move(*order) : std::vector<int>{};
    if (turn.empty()) {
        turn.resize(n);
        for (int i = 0; i < n; ++i) turn[i] = i;
    }
    if (static_cast<int>(turn.size()) != n)
        throw std::invalid_argument("round_robin: order must be a permutation of all agents");
    std::vector<char> perm_check(n, 0);
    for (int a : turn) {
        if (a < 0 || a >= n || perm_check[a])
            throw std::invalid_argument("round_robin: order must be a permutation of all agents");
        perm_check[a] = 1;
    }

    DiscreteAllocation alloc;
    alloc.owner.assign(m, -1);
    std::vector<char> taken(m, 0);
    int assigned = 0;
    for (int t = 0; assigned < m; ++t) {
        const int agent = turn[t % n];
        int pick = -1;
        double best = kNegInf;
        for (int k = 0; k < m; ++k) {
            if (taken[k]) continue;
            if (inst.value(k, agent) > best) {
                best = inst.value(k, agent);
                pick = k;
            }
        }
        taken[pick] = 1;
        alloc.owner[pick] = agent;
        ++assigned;
    }
    return alloc;
}

// Envy cycle elimination: items in index order go to the lowest-index
// unenvied agent; when every agent is envied, a cycle is located by walking
// backward from agent 0 through each node's lowest-index envier, and bundles
// rotate so every agent on the cycle receives the bundle of the agent it
// envies (a strict gain for each of them). Rotations repeat until an
// unenvied agent exists. The envy graph is recomputed from scratch after
// every assignment and rotation.
inline DiscreteAllocation envy_cycle_elimination(const Instance& inst) {
    const int n = inst.agents();
    const int m = inst.items();
    std::vector<int> owner(m, -1);

    auto lowest_unenvied = [&](const EnvyGraph& g) -> int {
        for (int j = 0; j < n; ++j)
            if (g.in_degree(j) == 0) return j;
        return -1;
    };

    for (int k = 0; k < m; ++k) {
        EnvyGraph g = build_envy_graph(inst, owner);
        int target = lowest_unenvied(g);
        while (target < 0) {
            // Every agent is envied, so every agent has at least one envier
            // and the backward walk must revisit a node.
            std::vector<int> pos_in_walk(n, -1);
            std::vector<int> walk;
            int cur = 0;
            while (pos_in_walk[cur] < 0) {
                pos_in_walk[cur] = static_cast<int>(walk.size());
                walk.push_back(cur);
                int envier = -1;
                for (int i = 0; i < n; ++i)
                    if (g.edge(i, cur)) {
                        envier = i;
                        break;
                    }
                if (envier < 0) throw std::logic_error("ECE: envied agent with no envier");
                cur = envier;
            }
            // walk[pos..end) is a cycle in which walk[t+1] envies walk[t];
            // give each member the bundle it envies.
            const int start = pos_in_walk[cur];
            const int len = static_cast<int>(walk.size()) - start;
            std::vector<std::vector<int>> bundles(len);
            for (int k2 = 0; k2 < m; ++k2)
                for (int t = 0; t < len; ++t)
                    if (owner[k2] == walk[start + t]) bundles[t].push_back(k2);
            for (int t = 0; t < len; ++t) {
                const int receiver = walk[start + (t + 1) % len];
                for (int k2 : bundles[t]) owner[k2] = receiver;
            }
            g = build_envy_graph(inst, owner);
            target = lowest_unenvied(g);
        }
        owner[k] = target;
    }

    DiscreteAllocation alloc;
    alloc.owner = std::move(owner);
    return alloc;
}

// Per-item argmax assignment; utilitarian-optimal under additivity.
inline DiscreteAllocation max_util(const Instance& inst) {
    DiscreteAllocation alloc;
    alloc.owner.resize(inst.items());
    for (int k = 0; k < inst.items(); ++k) {
        int best = 0;
        double bv = inst.value(k, 0);
        for (int i = 1; i < inst.agents(); ++i)
            if (inst.value(k, i) > bv) {
                bv = inst.value(k, i);
                best = i;
            }
        alloc.owner[k] = best;
    }
    return alloc;
}

} // namespace fairdiv
