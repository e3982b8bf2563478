#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fairdiv/baselines.hpp"
#include "fairdiv/core.hpp"
#include "fairdiv/gen.hpp"
#include "fairdiv/prng.hpp"

using namespace fairdiv;
using Catch::Approx;

namespace {

DiscreteAllocation owners(std::vector<int> o) { return DiscreteAllocation{std::move(o)}; }

DiscreteAllocation random_allocation(SplitMix64& rng, int n, int m) {
    DiscreteAllocation a;
    a.owner.resize(m);
    for (int k = 0; k < m; ++k) a.owner[k] = static_cast<int>(rng.next_below(n));
    return a;
}

// Integer-valued matrices make every checker comparison exact, which is what
// lets the two EF1 routes be compared with no tolerance at all.
Instance random_integer_instance(SplitMix64& rng, int n, int m, int levels = 4) {
    std::vector<double> v(static_cast<std::size_t>(n) * m);
    for (auto& x : v) x = static_cast<double>(rng.next_below(levels));
    return Instance(n, m, std::move(v));
}

} // namespace

TEST_CASE("instance validation", "[core]") {
    REQUIRE_THROWS_AS(Instance(0, 1, {}), std::invalid_argument);
    REQUIRE_THROWS_AS(Instance(1, 1, {1.0, 2.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(Instance(1, 1, {-0.5}), std::invalid_argument);
    REQUIRE_THROWS_AS(Instance(1, 1, {std::numeric_limits<double>::infinity()}),
                      std::invalid_argument);
    const Instance inst(2, 2, {1, 0, 0, 1});
    REQUIRE(inst.value(0, 0) == 1.0);
    REQUIRE(inst.value(1, 0) == 0.0);
}

TEST_CASE("utilities on hand examples", "[core]") {
    const Instance ident(2, 2, {1, 0, 0, 1});
    const auto u = utilities(ident, owners({0, 1}));
    REQUIRE(u == UtilityVector{1.0, 1.0});

    const Instance inst(2, 3, {2, 1, 1, 2, 3, 3});
    REQUIRE(utilities(inst, owners({0, 1, 0})) == UtilityVector{5.0, 2.0});

    const auto all0 = utilities(inst, owners({0, 0, 0}));
    REQUIRE(all0[0] == Approx(2 + 1 + 3));
    REQUIRE(all0[1] == 0.0);

    REQUIRE_THROWS_AS(utilities(inst, owners({0, 1})), std::invalid_argument);
    REQUIRE_THROWS_AS(utilities(inst, owners({0, 1, 5})), std::invalid_argument);
}

TEST_CASE("welfare functions", "[core]") {
    REQUIRE(utilitarian_welfare({1, 1}) == 2.0);
    REQUIRE(utilitarian_welfare({0, 0, 0}) == 0.0);
    REQUIRE(utilitarian_welfare({5, 2}) == 7.0);

    REQUIRE(nash_welfare({2, 8}) == Approx(4.0));
    REQUIRE(nash_welfare({3, 3, 3}) == Approx(3.0));
    REQUIRE(nash_welfare({5, 0}) == 0.0);

    REQUIRE(log_nash({1, 1, 1}) == 0.0);
    REQUIRE(log_nash({2, 8}) == Approx(std::log(16.0)));
    REQUIRE(log_nash({0, 3}) == kNegInf);
}

TEST_CASE("nash welfare matches the product route", "[core]") {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_below(6));
        UtilityVector u(n);
        for (auto& x : u) x = 0.05 + rng.next_double() * 10.0;
        double prod = 1.0;
        for (double x : u) prod *= x;
        REQUIRE(std::pow(nash_welfare(u), n) == Approx(prod).epsilon(1e-10));
    }
}

TEST_CASE("ef1 pair checkers on hand examples", "[core]") {
    const Instance single(2, 1, {1, 1});
    REQUIRE(ef1_pair_closed(single, owners({0}), 1, 0));
    REQUIRE(ef1_pair_general(single, owners({0}), 1, 0));

    const Instance ones(2, 3, {1, 1, 1, 1, 1, 1});
    REQUIRE_FALSE(ef1_pair_closed(ones, owners({0, 0, 0}), 1, 0));
    REQUIRE_FALSE(ef1_pair_general(ones, owners({0, 0, 0}), 1, 0));

    const Instance ident(2, 2, {1, 0, 0, 1});
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            if (i == j) continue;
            REQUIRE(ef1_pair_closed(ident, owners({0, 1}), i, j));
            REQUIRE(ef1_pair_general(ident, owners({0, 1}), i, j));
        }
}

TEST_CASE("is_ef1 reports the first violation lexicographically", "[core]") {
    const Instance ident(2, 2, {1, 0, 0, 1});
    const auto ok = is_ef1(ident, owners({0, 1}));
    REQUIRE(ok.ok);
    REQUIRE_FALSE(ok.first_violation.has_value());

    const Instance ones(2, 3, {1, 1, 1, 1, 1, 1});
    const auto bad = is_ef1(ones, owners({0, 0, 0}));
    REQUIRE_FALSE(bad.ok);
    REQUIRE(bad.first_violation == std::make_pair(1, 0));
}

TEST_CASE("round-robin outputs satisfy the EF1 oracle", "[core]") {
    SplitMix64 rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_below(5));
        const int m = 1 + static_cast<int>(rng.next_below(10));
        const Instance inst = gen_uniform(n, m, rng.next_u64());
        REQUIRE(is_ef1(inst, round_robin(inst)).ok);
    }
}

TEST_CASE("efx checker", "[core]") {
    const Instance ident(2, 2, {1, 0, 0, 1});
    REQUIRE(is_efx(ident, owners({0, 1})));

    // EF1 holds through the large item, EFX fails through the small one.
    const Instance skew(2, 2, {3, 3, 1, 1});
    const auto both0 = owners({0, 0});
    REQUIRE(is_ef1(skew, both0).ok);
    REQUIRE_FALSE(is_efx(skew, both0));

    // Singleton bundles: min over the bundle equals max, so EFX == EF1.
    SplitMix64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(4));
        const Instance inst = gen_uniform(n, n, rng.next_u64());
        DiscreteAllocation perm;
        perm.owner.resize(n);
        for (int k = 0; k < n; ++k) perm.owner[k] = k;
        REQUIRE(is_efx(inst, perm) == is_ef1(inst, perm).ok);
    }
}

TEST_CASE("efx positive_only restriction", "[core]") {
    // Item 1 is worth nothing to agent 1; with positive_only the zero item
    // cannot serve as the removal bound.
    const Instance inst(2, 3, {4, 4, 1, 0, 2, 2});
    const auto a = owners({0, 0, 1});
    // envy of 1 toward 0: v1({o0,o1}) - v1({o2}) = 4 - 2 = 2; min over all
    // items is 0 (fails), min over positive items is 4 (passes).
    REQUIRE_FALSE(is_efx(inst, a, false));
    REQUIRE(is_efx(inst, a, true));
}

TEST_CASE("envy report invariant", "[core]") {
    SplitMix64 rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(4));
        const int m = 1 + static_cast<int>(rng.next_below(8));
        const Instance inst = random_integer_instance(rng, n, m);
        const auto alloc = random_allocation(rng, n, m);
        const EnvyReport rep = envy_report(inst, alloc);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                const EnvyPair& p = rep.at(i, j);
                const bool expected =
                    p.envy <= 0.0 || (p.max_item.has_value() && p.envy <= *p.max_item);
                REQUIRE(p.ef1_ok == expected);
                REQUIRE(p.ef1_ok == ef1_pair_closed(inst, alloc, i, j));
            }
    }
}

TEST_CASE("ef1 general and closed forms agree everywhere", "[core][equivalence]") {
    SplitMix64 rng(51);
    long long pairs_checked = 0;
    while (pairs_checked < 100'000) {
        const int n = 2 + static_cast<int>(rng.next_below(5)); // up to 6
        const int m = 1 + static_cast<int>(rng.next_below(12));
        const bool integer_valued = rng.next_below(2) == 0;
        const Instance inst = integer_valued ? random_integer_instance(rng, n, m)
                                             : gen_uniform(n, m, rng.next_u64());
        const auto alloc = random_allocation(rng, n, m);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                REQUIRE(ef1_pair_general(inst, alloc, i, j) ==
                        ef1_pair_closed(inst, alloc, i, j));
                ++pairs_checked;
            }
    }
}

TEST_CASE("utilities is linear in the allocation", "[core]") {
    SplitMix64 rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(4));
        const int m = 1 + static_cast<int>(rng.next_below(6));
        const Instance inst = gen_uniform(n, m, rng.next_u64());
        const auto A = to_fractional(random_allocation(rng, n, m), n);
        const auto B = to_fractional(random_allocation(rng, n, m), n);
        const double lam = rng.next_double();
        FractionalAllocation mix{m, n, {}};
        mix.probs.resize(A.probs.size());
        for (std::size_t i = 0; i < A.probs.size(); ++i)
            mix.probs[i] = lam * A.probs[i] + (1 - lam) * B.probs[i];
        const auto um = utilities(inst, mix);
        const auto ua = utilities(inst, A);
        const auto ub = utilities(inst, B);
        for (int i = 0; i < n; ++i)
            REQUIRE(um[i] == Approx(lam * ua[i] + (1 - lam) * ub[i]).margin(1e-12));
    }
}

TEST_CASE("discretize", "[core]") {
    FractionalAllocation f{2, 2, {0.1, 0.9, 0.5, 0.5}};
    const auto d = discretize(f);
    REQUIRE(d.owner == std::vector<int>{1, 0});

    // idempotence on one-hot input, with exactly-one row sums
    const auto onehot = to_fractional(d, 2);
    REQUIRE(onehot.valid(0.0));
    REQUIRE(discretize(onehot).owner == d.owner);
}

TEST_CASE("ef1 verdict invariant under doubling an agent's value column", "[core]") {
    SplitMix64 rng(71);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(4));
        const int m = 1 + static_cast<int>(rng.next_below(8));
        const Instance inst = gen_uniform(n, m, rng.next_u64());
        const auto alloc = random_allocation(rng, n, m);
        const int i = static_cast<int>(rng.next_below(n));
        const double c = rng.next_below(2) == 0 ? 2.0 : 0.5; // exact scaling
        std::vector<double> scaled = inst.values();
        for (int k = 0; k < m; ++k) scaled[static_cast<std::size_t>(k) * n + i] *= c;
        const Instance inst2(n, m, std::move(scaled));
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto before = utilities(inst, alloc)[i];
            (void)before;
            REQUIRE(ef1_pair_closed(inst, alloc, i, j) == ef1_pair_closed(inst2, alloc, i, j));
        }
        // scaling agent i's column scales u_i by c and nobody else's
        const auto u1 = utilities(inst, alloc);
        const auto u2 = utilities(inst2, alloc);
        for (int a = 0; a < n; ++a) {
            if (a == i)
                REQUIRE(u2[a] == c * u1[a]);
            else
                REQUIRE(u2[a] == u1[a]);
        }
    }
}
