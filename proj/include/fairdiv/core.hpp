#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fairdiv {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct InstanceMeta {
    std::string dist;
    std::map<std::string, double> params;
    std::uint64_t seed = 0;
};

// A discrete fair-division instance: nonnegative m-by-n valuation matrix,
// rows are items, columns are agents. value(k, i) is agent i's value for
// item k. The orientation is fixed everywhere in this library; transposed
// external data must be converted at ingestion.
class Instance {
public:
    Instance(int n, int m, std::vector<double> values,
             std::optional<InstanceMeta> meta = std::nullopt)
        : n_(n), m_(m), values_(std::move(values)), meta_(std::move(meta)) {
        if (n_ < 1 || m_ < 1)
            throw std::invalid_argument("Instance: n and m must be >= 1");
        if (values_.size() != static_cast<std::size_t>(n_) * static_cast<std::size_t>(m_))
            throw std::invalid_argument("Instance: values size must be m*n");
        for (double v : values_) {
            if (!std::isfinite(v) || v < 0.0)
                throw std::invalid_argument("Instance: entries must be finite and >= 0");
        }
    }

    int agents() const { return n_; }
    int items() const { return m_; }
    double value(int item, int agent) const {
        return values_[static_cast<std::size_t>(item) * n_ + agent];
    }
    const std::vector<double>& values() const { return values_; }
    const std::optional<InstanceMeta>& meta() const { return meta_; }

private:
    int n_;
    int m_;
    std::vector<double> values_; // row-major, m rows of n
    std::optional<InstanceMeta> meta_;
};

// Total assignment: owner[k] is the agent holding item k.
struct DiscreteAllocation {
    std::vector<int> owner;

    int items() const { return static_cast<int>(owner.size()); }
};

// Row-stochastic m-by-n assignment; each row is a distribution over agents.
struct FractionalAllocation {
    int m = 0;
    int n = 0;
    std::vector<double> probs; // row-major

    double at(int item, int agent) const {
        return probs[static_cast<std::size_t>(item) * n + agent];
    }

    bool valid(double tol = 1e-9) const {
        if (probs.size() != static_cast<std::size_t>(m) * n) return false;
        for (int k = 0; k < m; ++k) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) {
                const double p = at(k, i);
                if (!(p >= 0.0 && p <= 1.0)) return false;
                s += p;
            }
            if (std::abs(s - 1.0) > tol) return false;
        }
        return true;
    }
};

using UtilityVector = std::vector<double>;

namespace detail {
inline void check_dims(const Instance& inst, const DiscreteAllocation& alloc) {
    if (alloc.items() != inst.items())
        throw std::invalid_argument("allocation/instance dimension mismatch");
    for (int o : alloc.owner) {
        if (o < 0 || o >= inst.agents())
            throw std::invalid_argument("allocation owner out of range");
    }
}
inline void check_dims(const Instance& inst, const FractionalAllocation& alloc) {
    if (alloc.m != inst.items() || alloc.n != inst.agents())
        throw std::invalid_argument("allocation/instance dimension mismatch");
}
} // namespace detail

// Realized utilities u_i = sum_k V(k,i) A(k,i). Accumulation is in item-index
// order so results are reproducible bit-for-bit.
inline UtilityVector utilities(const Instance& inst, const DiscreteAllocation& alloc) {
    detail::check_dims(inst, alloc);
    UtilityVector u(inst.agents(), 0.0);
    for (int k = 0; k < inst.items(); ++k) u[alloc.owner[k]] += inst.value(k, alloc.owner[k]);
    return u;
}

inline UtilityVector utilities(const Instance& inst, const FractionalAllocation& alloc) {
    detail::check_dims(inst, alloc);
    UtilityVector u(inst.agents(), 0.0);
    for (int k = 0; k < inst.items(); ++k)
        for (int i = 0; i < inst.agents(); ++i) u[i] += inst.value(k, i) * alloc.at(k, i);
    return u;
}

inline double utilitarian_welfare(const UtilityVector& u) {
    double s = 0.0;
    for (double x : u) s += x;
    return s;
}

// Utilitarian welfare of a discrete allocation summed in item-index order;
// bit-equal to optimal_uw when every item sits with its argmax agent.
inline double utilitarian_welfare_items(const Instance& inst, const DiscreteAllocation& alloc) {
    detail::check_dims(inst, alloc);
    double s = 0.0;
    for (int k = 0; k < inst.items(); ++k) s += inst.value(k, alloc.owner[k]);
    return s;
}

// Geometric mean of utilities; 0 whenever some agent realizes nothing.
inline double nash_welfare(const UtilityVector& u) {
    double acc = 0.0;
    for (double x : u) {
        if (x <= 0.0) return 0.0;
        acc += std::log(x);
    }
    return std::exp(acc / static_cast<double>(u.size()));
}

// Sum of log-utilities; -inf marks any nonpositive utility.
inline double log_nash(const UtilityVector& u) {
    double acc = 0.0;
    for (double x : u) {
        if (x <= 0.0) return kNegInf;
        acc += std::log(x);
    }
    return acc;
}

namespace detail {
// v_i(A_j): value agent i places on agent j's bundle, item-index order.
inline double bundle_value(const Instance& inst, const DiscreteAllocation& alloc, int i, int j) {
    double s = 0.0;
    for (int k = 0; k < inst.items(); ++k)
        if (alloc.owner[k] == j) s += inst.value(k, i);
    return s;
}
} // namespace detail

// Closed additive form: envy of i toward j is bounded by the single best
// item in j's bundle (from i's perspective). Vacuously true without envy;
// an empty envied bundle cannot carry positive envy under nonnegative
// values, so the empty max is never evaluated.
inline bool ef1_pair_closed(const Instance& inst, const DiscreteAllocation& alloc, int i, int j) {
    const double vii = detail::bundle_value(inst, alloc, i, i);
    const double vij = detail::bundle_value(inst, alloc, i, j);
    const double envy = vij - vii;
    if (envy <= 0.0) return true;
    double max_item = kNegInf;
    for (int k = 0; k < inst.items(); ++k)
        if (alloc.owner[k] == j) max_item = std::max(max_item, inst.value(k, i));
    return envy <= max_item;
}

// Removal-based definition: some single item of A_j can be hypothetically
// dropped to kill the envy. Kept as an independent computation path (fresh
// sums over A_j \ {o}) so it can cross-check ef1_pair_closed.
inline bool ef1_pair_general(const Instance& inst, const DiscreteAllocation& alloc, int i, int j) {
    const double vii = detail::bundle_value(inst, alloc, i, i);
    const double vij = detail::bundle_value(inst, alloc, i, j);
    if (vii >= vij) return true; // no envy
    for (int drop = 0; drop < inst.items(); ++drop) {
        if (alloc.owner[drop] != j) continue;
        double rest = 0.0;
        for (int k = 0; k < inst.items(); ++k)
            if (alloc.owner[k] == j && k != drop) rest += inst.value(k, i);
        if (vii >= rest) return true;
    }
    return false;
}

struct Ef1Result {
    bool ok = true;
    std::optional<std::pair<int, int>> first_violation;
};

// Checks every ordered pair in lexicographic order.
inline Ef1Result is_ef1(const Instance& inst, const DiscreteAllocation& alloc) {
    detail::check_dims(inst, alloc);
    for (int i = 0; i < inst.agents(); ++i)
        for (int j = 0; j < inst.agents(); ++j) {
            if (i == j) continue;
            if (!ef1_pair_closed(inst, alloc, i, j)) return {false, std::make_pair(i, j)};
        }
    return {true, std::nullopt};
}

// EFX: envy must be bounded by the *least* valuable item in the envied
// bundle (restricted to positively valued items when positive_only is set).
// When i actually envies j, v_i(A_j) > 0, so the restricted min is defined.
inline bool is_efx(const Instance& inst, const DiscreteAllocation& alloc, bool positive_only = false) {
    detail::check_dims(inst, alloc);
    for (int i = 0; i < inst.agents(); ++i)
        for (int j = 0; j < inst.agents(); ++j) {
            if (i == j) continue;
            const double vii = detail::bundle_value(inst, alloc, i, i);
            const double vij = detail::bundle_value(inst, alloc, i, j);
            const double envy = vij - vii;
            if (envy <= 0.0) continue;
            double min_item = std::numeric_limits<double>::infinity();
            for (int k = 0; k < inst.items(); ++k) {
                if (alloc.owner[k] != j) continue;
                const double v = inst.value(k, i);
                if (positive_only && v <= 0.0) continue;
                min_item = std::min(min_item, v);
            }
            if (envy > min_item) return false;
        }
    return true;
}

struct EnvyPair {
    double envy = 0.0;
    std::optional<double> max_item; // empty envied bundle leaves this unset
    bool ef1_ok = true;
    bool efx_ok = true;
};

struct EnvyReport {
    int n = 0;
    std::vector<EnvyPair> pairs; // n*n, diagonal unused

    const EnvyPair& at(int i, int j) const { return pairs[static_cast<std::size_t>(i) * n + j]; }
    EnvyPair& at(int i, int j) { return pairs[static_cast<std::size_t>(i) * n + j]; }
};

inline EnvyReport envy_report(const Instance& inst, const DiscreteAllocation& alloc,
                              bool positive_only = false) {
    detail::check_dims(inst, alloc);
    EnvyReport rep;
    rep.n = inst.agents();
    rep.pairs.assign(static_cast<std::size_t>(rep.n) * rep.n, EnvyPair{});
    for (int i = 0; i < rep.n; ++i)
        for (int j = 0; j < rep.n; ++j) {
            if (i == j) continue;
            EnvyPair& p = rep.at(i, j);
            const double vii = detail::bundle_value(inst, alloc, i, i);
            const double vij = detail::bundle_value(inst, alloc, i, j);
            p.envy = vij - vii;
            double max_item = kNegInf;
            double min_item = std::numeric_limits<double>::infinity();
            bool any = false;
            for (int k = 0; k < inst.items(); ++k) {
                if (alloc.owner[k] != j) continue;
                any = true;
                const double v = inst.value(k, i);
                max_item = std::max(max_item, v);
                if (!positive_only || v > 0.0) min_item = std::min(min_item, v);
            }
            if (any) p.max_item = max_item;
            p.ef1_ok = p.envy <= 0.0 || (any && p.envy <= max_item);
            p.efx_ok = p.envy <= 0.0 || p.envy <= min_item;
        }
    return rep;
}

// Row-wise argmax; ties go to the lowest agent index.
inline DiscreteAllocation discretize(const FractionalAllocation& frac) {
    DiscreteAllocation out;
    out.owner.resize(frac.m);
    for (int k = 0; k < frac.m; ++k) {
        int best = 0;
        double best_p = frac.at(k, 0);
        for (int i = 1; i < frac.n; ++i) {
            if (frac.at(k, i) > best_p) {
                best_p = frac.at(k, i);
                best = i;
            }
        }
        out.owner[k] = best;
    }
    return out;
}

inline FractionalAllocation to_fractional(const DiscreteAllocation& alloc, int n) {
    FractionalAllocation f;
    f.m = alloc.items();
    f.n = n;
    f.probs.assign(static_cast<std::size_t>(f.m) * n, 0.0);
    for (int k = 0; k < f.m; ++k) f.probs[static_cast<std::size_t>(k) * n + alloc.owner[k]] = 1.0;
    return f;
}

} // namespace fairdiv
