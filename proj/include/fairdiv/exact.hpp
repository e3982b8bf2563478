#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fairdiv/core.hpp"

namespace fairdiv {

enum class ExactMethod { brute, bnb };

struct ExactNwResult {
    DiscreteAllocation best_alloc;
    double best_log_nash = kNegInf; // -inf when the best leaf still zeroes someone out
    long long nodes_explored = 0;
    ExactMethod method = ExactMethod::brute;
    bool proven = true;       // false when a budget cut the search short
    int positive_agents = 0;  // agents with positive utility at the best leaf
};

struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sum over items of the per-item maximum; the utilitarian optimum under
// additivity, summed in item-index order.
inline double optimal_uw(const Instance& inst) {
    double s = 0.0;
    for (int k = 0; k < inst.items(); ++k) {
        double best = inst.value(k, 0);
        for (int i = 1; i < inst.agents(); ++i) best = std::max(best, inst.value(k, i));
        s += best;
    }
    return s;
}

namespace detail {

// Leaf quality as a composite key: (count of positive utilities, product of
// the positive ones). All-positive leaves compare by plain Nash product;
// zero-utility leaves sort below them and among themselves by how many
// agents they leave empty-handed, then the surviving product. Lexicographic
// comparison; strictly-greater updates preserve first-found (lexicographic)
// ties.
struct LeafKey {
    int positives = -1;
    double product = 0.0;

    bool better_than(const LeafKey& o) const {
        if (positives != o.positives) return positives > o.positives;
        return product > o.product;
    }
};

inline LeafKey leaf_key(const UtilityVector& u) {
    LeafKey k;
    k.positives = 0;
    k.product = 1.0;
    for (double x : u)
        if (x > 0.0) {
            ++k.positives;
            k.product *= x;
        }
    return k;
}

inline void finalize(const Instance& inst, ExactNwResult& res) {
    const UtilityVector u = utilities(inst, res.best_alloc);
    res.best_log_nash = log_nash(u); // canonical fixed-order value
    res.positive_agents = 0;
    for (double x : u)
        if (x > 0.0) ++res.positive_agents;
}

} // namespace detail

// Exhaustive search over all n^m owner vectors in lexicographic order with
// incremental utility updates. Refuses instances beyond the evaluation
// budget; the caller is pointed at the branch-and-bound solver instead.
inline ExactNwResult optimal_nw_brute(const Instance& inst,
                                      long long eval_budget = 100'000'000LL) {
    const int n = inst.agents();
    const int m = inst.items();

    double leaves = 1.0;
    for (int k = 0; k < m; ++k) {
        leaves *= n;
        if (leaves > static_cast<double>(eval_budget))
            throw BudgetExceeded(
                "optimal_nw_brute: n^m exceeds the enumeration budget; use optimal_nw_bnb");
    }

    ExactNwResult res;
    res.method = ExactMethod::brute;

    std::vector<int> owner(m, 0);
    UtilityVector u(n, 0.0);
    for (int k = 0; k < m; ++k) u[0] += inst.value(k, 0);

    detail::LeafKey best = detail::leaf_key(u);
    res.best_alloc.owner = owner;
    res.nodes_explored = 1;

    // Odometer with the last item fastest = lexicographic owner order.
    for (;;) {
        int pos = m - 1;
        while (pos >= 0 && owner[pos] == n - 1) {
            u[n - 1] -= inst.value(pos, n - 1);
            u[0] += inst.value(pos, 0);
            owner[pos] = 0;
            --pos;
        }
        if (pos < 0) break;
        u[owner[pos]] -= inst.value(pos, owner[pos]);
        ++owner[pos];
        u[owner[pos]] += inst.value(pos, owner[pos]);
        ++res.nodes_explored;

        const detail::LeafKey key = detail::leaf_key(u);
        if (key.better_than(best)) {
            best = key;
            res.best_alloc.owner = owner;
        }
    }

    detail::finalize(inst, res);
    return res;
}

// Depth-first branch-and-bound over items ordered by decreasing row maximum.
// At a node with partial utilities u and remaining per-agent mass R, every
// completion satisfies u_i_final <= u_i + R_i, so the key built from u + R
// dominates all leaves below and pruning on it is admissible.
inline ExactNwResult optimal_nw_bnb(const Instance& inst, long long node_budget = 10'000'000LL) {
    const int n = inst.agents();
    const int m = inst.items();

    std::vector<int> item_order(m);
    std::iota(item_order.begin(), item_order.end(), 0);
    std::vector<double> row_max(m);
    for (int k = 0; k < m; ++k) {
        double best = inst.value(k, 0);
        for (int i = 1; i < n; ++i) best = std::max(best, inst.value(k, i));
        row_max[k] = best;
    }
    std::stable_sort(item_order.begin(), item_order.end(),
                     [&](int a, int b) { return row_max[a] > row_max[b]; });

    // suffix[d*n + i] = mass still assignable to agent i from depth d on.
    std::vector<double> suffix(static_cast<std::size_t>(m + 1) * n, 0.0);
    for (int d = m - 1; d >= 0; --d)
        for (int i = 0; i < n; ++i)
            suffix[static_cast<std::size_t>(d) * n + i] =
                suffix[static_cast<std::size_t>(d + 1) * n + i] + inst.value(item_order[d], i);

    ExactNwResult res;
    res.method = ExactMethod::bnb;
    res.best_alloc.owner.assign(m, 0);

    detail::LeafKey best; // positives = -1 sorts below every real leaf
    std::vector<int> owner(m, 0);
    UtilityVector u(n, 0.0);
    bool budget_hit = false;
    bool have_leaf = false;

    auto bound_key = [&](int depth) {
        detail::LeafKey k;
        k.positives = 0;
        k.product = 1.0;
        for (int i = 0; i < n; ++i) {
            const double cap = u[i] + suffix[static_cast<std::size_t>(depth) * n + i];
            if (cap > 0.0) {
                ++k.positives;
                k.product *= cap;
            }
        }
        return k;
    };

    auto dfs = [&](auto&& self, int depth) -> void {
        if (budget_hit) return;
        ++res.nodes_explored;
        if (res.nodes_explored > node_budget) {
            budget_hit = true;
            return;
        }
        if (depth == m) {
            const detail::LeafKey key = detail::leaf_key(u);
            if (!have_leaf || key.better_than(best)) {
                best = key;
                have_leaf = true;
                for (int d = 0; d < m; ++d) res.best_alloc.owner[item_order[d]] = owner[d];
            }
            return;
        }
        if (have_leaf && !bound_key(depth).better_than(best)) return;
        const int item = item_order[depth];
        for (int i = 0; i < n; ++i) {
            owner[depth] = i;
            const double saved = u[i];
            u[i] = saved + inst.value(item, i);
            self(self, depth + 1);
            u[i] = saved;
            if (budget_hit) return;
        }
    };
    dfs(dfs, 0);

    res.proven = !budget_hit;
    detail::finalize(inst, res);
    return res;
}

} // namespace fairdiv
