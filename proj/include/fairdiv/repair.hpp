#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "fairdiv/core.hpp"

namespace fairdiv {

struct RepairResult {
    DiscreteAllocation alloc;
    int passes_executed = 0;      // outer iterations in which the pair scan ran
    int passes_with_transfers = 0; // passes that moved at least one item
    long long transfers = 0;       // total items moved
    bool converged = false;        // a full pass completed with no transfer
};

// True iff (i,j) violates EF1: envy of i toward j exceeds the best single
// item in j's bundle. Caller guarantees i != j and a nonempty A_j.
inline bool ef1_violation(const Instance& inst, const DiscreteAllocation& alloc, int i, int j) {
    double vii = 0.0, vij = 0.0, max_item = kNegInf;
    for (int k = 0; k < inst.items(); ++k) {
        const int o = alloc.owner[k];
        if (o == i) vii += inst.value(k, i);
        if (o == j) {
            const double v = inst.value(k, i);
            vij += v;
            if (v > max_item) max_item = v;
        }
    }
    return vij - vii > max_item;
}

// Log-Nash improvement of moving item o from j to i given current utilities:
// ln(u_i + V(o,i)) + ln(u_j - V(o,j)). -inf marks moves that strip the donor
// to zero (or leave the receiver at zero).
inline double transfer_score(const Instance& inst, const UtilityVector& util, int i, int j,
                             int item) {
    const double gain = util[i] + inst.value(item, i);
    const double rest = util[j] - inst.value(item, j);
    if (rest <= 0.0 || gain == 0.0) return kNegInf;
    return std::log(gain) + std::log(rest);
}

namespace detail {

// Picks the item to move from j to i: best finite score, ties by lowest item
// index; if every candidate is -inf, the item maximizing the receiver's gain
// u_i + V(o,i), ties by lowest item index.
template <typename BundleIter>
int pick_transfer_item(const Instance& inst, const UtilityVector& util, int i, int j,
                       BundleIter begin, BundleIter end) {
    int best_item = -1;
    double best_score = kNegInf;
    int fallback_item = -1;
    double fallback_gain = kNegInf;
    for (BundleIter it = begin; it != end; ++it) {
        const int item = *it;
        const double s = transfer_score(inst, util, i, j, item);
        if (s > best_score) {
            best_score = s;
            best_item = item;
        }
        const double gain = util[i] + inst.value(item, i);
        if (gain > fallback_gain) {
            fallback_gain = gain;
            fallback_item = item;
        }
    }
    return best_score > kNegInf ? best_item : fallback_item;
}

} // namespace detail

// Notified after each transfer with the utilities on both sides of the move.
using TransferObserver =
    std::function<void(const UtilityVector& before, const UtilityVector& after, int from_j,
                       int to_i, int item)>;

// Reference EF1-Quick-Repair: scan ordered pairs lexicographically each pass,
// transfer the best-scoring item out of each detected violation, updating
// utilities immediately, until a pass moves nothing or the pass cap is hit.
inline RepairResult ef1_quick_repair(const Instance& inst, DiscreteAllocation alloc,
                                     int max_passes, const TransferObserver& observer = {}) {
    if (max_passes < 1) throw std::invalid_argument("ef1_quick_repair: max_passes >= 1");
    detail::check_dims(inst, alloc);
    const int n = inst.agents();
    const int m = inst.items();

    UtilityVector util = utilities(inst, alloc);
    RepairResult res;
    for (int pass = 0; pass < max_passes; ++pass) {
        ++res.passes_executed;
        bool changed = false;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                std::vector<int> bundle;
                for (int k = 0; k < m; ++k)
                    if (alloc.owner[k] == j) bundle.push_back(k);
                if (bundle.empty()) continue;
                if (!ef1_violation(inst, alloc, i, j)) continue;
                const int item =
                    detail::pick_transfer_item(inst, util, i, j, bundle.begin(), bundle.end());
                const UtilityVector before = observer ? util : UtilityVector{};
                alloc.owner[item] = i;
                util[i] += inst.value(item, i);
                util[j] -= inst.value(item, j);
                if (observer) observer(before, util, j, i, item);
                changed = true;
                ++res.transfers;
            }
        if (changed) ++res.passes_with_transfers;
        if (!changed) {
            res.converged = true;
            break;
        }
    }
    res.alloc = std::move(alloc);
    return res;
}

// Tight-loop variant with the same transfer semantics: bundles kept as
// sorted index lists, bundle values v_i(A_j) maintained incrementally as a
// dense n*n matrix instead of being rebuilt per pair. Pinned equal to the
// reference by a differential test.
inline RepairResult ef1_quick_repair_fast(const Instance& inst, DiscreteAllocation alloc,
                                          int max_passes) {
    if (max_passes < 1) throw std::invalid_argument("ef1_quick_repair: max_passes >= 1");
    detail::check_dims(inst, alloc);
    const int n = inst.agents();
    const int m = inst.items();

    std::vector<std::vector<int>> bundles(n); // ascending item indices
    for (int k = 0; k < m; ++k) bundles[alloc.owner[k]].push_back(k);

    // Bundle values are recomputed fresh (item-index order) after each
    // mutation touching j's or i's bundle, matching the reference's
    // summation order exactly; only rows {i,j} need refreshing.
    std::vector<double> bv(static_cast<std::size_t>(n) * n, 0.0); // bv[i*n+j] = v_i(A_j)
    auto refresh_column = [&](int j) {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k : bundles[j]) s += inst.value(k, i);
            bv[static_cast<std::size_t>(i) * n + j] = s;
        }
    };
    for (int j = 0; j < n; ++j) refresh_column(j);

    UtilityVector util = utilities(inst, alloc);
    RepairResult res;
    for (int pass = 0; pass < max_passes; ++pass) {
        ++res.passes_executed;
        bool changed = false;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j || bundles[j].empty()) continue;
                double max_item = kNegInf;
                for (int k : bundles[j]) max_item = std::max(max_item, inst.value(k, i));
                const double envy =
                    bv[static_cast<std::size_t>(i) * n + j] - bv[static_cast<std::size_t>(i) * n + i];
                if (!(envy > max_item)) continue;
                const int item = detail::pick_transfer_item(inst, util, i, j, bundles[j].begin(),
                                                            bundles[j].end());
                auto& from = bundles[j];
                from.erase(std::lower_bound(from.begin(), from.end(), item));
                auto& to = bundles[i];
                to.insert(std::lower_bound(to.begin(), to.end(), item), item);
                alloc.owner[item] = i;
                util[i] += inst.value(item, i);
                util[j] -= inst.value(item, j);
                refresh_column(i);
                refresh_column(j);
                changed = true;
                ++res.transfers;
            }
        if (changed) ++res.passes_with_transfers;
        if (!changed) {
            res.converged = true;
            break;
        }
    }
    res.alloc = std::move(alloc);
    return res;
}

} // namespace fairdiv
