#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fairdiv/baselines.hpp"
#include "fairdiv/core.hpp"
#include "fairdiv/exact.hpp"
#include "fairdiv/gen.hpp"
#include "fairdiv/prng.hpp"
#include "fairdiv/repair.hpp"

using namespace fairdiv;
using Catch::Approx;

namespace {

Instance random_instance(SplitMix64& rng, int n, int m) {
    return gen_uniform(n, m, rng.next_u64());
}

// Value-level agreement between two exact results, covering the
// zero-utility fallback ranking as well.
void require_same_optimum(const Instance& inst, const ExactNwResult& a, const ExactNwResult& b) {
    REQUIRE(a.positive_agents == b.positive_agents);
    if (a.best_log_nash != kNegInf) {
        REQUIRE(b.best_log_nash != kNegInf);
        REQUIRE(a.best_log_nash == Approx(b.best_log_nash).epsilon(1e-12));
        return;
    }
    REQUIRE(b.best_log_nash == kNegInf);
    // Compare the fallback key: product over positive utilities.
    auto positive_product = [&](const ExactNwResult& r) {
        double p = 1.0;
        for (double u : utilities(inst, r.best_alloc))
            if (u > 0.0) p *= u;
        return p;
    };
    REQUIRE(positive_product(a) == Approx(positive_product(b)).epsilon(1e-12));
}

} // namespace

TEST_CASE("optimal uw", "[exact]") {
    REQUIRE(optimal_uw(Instance(2, 2, {3, 1, 1, 3})) == 6.0);
    REQUIRE(optimal_uw(Instance(3, 2, {0, 0, 0, 0, 0, 0})) == 0.0);

    SplitMix64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_below(5));
        const int m = 1 + static_cast<int>(rng.next_below(10));
        const Instance inst = random_instance(rng, n, m);
        // bit-equal to the max_util allocation summed in item order
        REQUIRE(utilitarian_welfare_items(inst, max_util(inst)) == optimal_uw(inst));
        // and an upper bound for arbitrary allocations
        DiscreteAllocation a;
        a.owner.resize(m);
        for (int k = 0; k < m; ++k) a.owner[k] = static_cast<int>(rng.next_below(n));
        REQUIRE(utilitarian_welfare_items(inst, a) <= optimal_uw(inst) + 1e-12);
    }
}

TEST_CASE("brute force on hand instances", "[exact]") {
    const Instance inst(2, 2, {2, 1, 1, 2});
    const auto res = optimal_nw_brute(inst);
    REQUIRE(res.best_alloc.owner == std::vector<int>{0, 1});
    REQUIRE(std::exp(res.best_log_nash / 2.0) == Approx(2.0));
    REQUIRE(res.nodes_explored == 4);
    REQUIRE(res.proven);

    const Instance solo(1, 3, {1, 2, 3});
    const auto r1 = optimal_nw_brute(solo);
    REQUIRE(r1.best_alloc.owner == std::vector<int>{0, 0, 0});
    REQUIRE(r1.best_log_nash == Approx(std::log(6.0)));
}

TEST_CASE("brute force refuses beyond the enumeration budget", "[exact]") {
    const Instance big(3, 20, std::vector<double>(60, 1.0));
    REQUIRE_THROWS_AS(optimal_nw_brute(big), BudgetExceeded);
    REQUIRE_NOTHROW(optimal_nw_brute(Instance(2, 3, {1, 2, 3, 4, 5, 6}), 8));
    REQUIRE_THROWS_AS(optimal_nw_brute(Instance(2, 3, {1, 2, 3, 4, 5, 6}), 7), BudgetExceeded);
}

TEST_CASE("brute ties resolve to the lexicographically smallest owner vector", "[exact]") {
    // Symmetric instance: [0,1] and [1,0] tie; enumeration order must keep
    // the first.
    const Instance sym(2, 2, {1, 1, 1, 1});
    REQUIRE(optimal_nw_brute(sym).best_alloc.owner == std::vector<int>{0, 1});
}

TEST_CASE("result invariant: exp(best_log_nash/n) equals the allocation's nash welfare",
          "[exact]") {
    SplitMix64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_below(3));
        const int m = n + static_cast<int>(rng.next_below(5));
        const Instance inst = random_instance(rng, n, m);
        const auto res = optimal_nw_brute(inst);
        REQUIRE(std::exp(res.best_log_nash / n) ==
                Approx(nash_welfare(utilities(inst, res.best_alloc))).epsilon(1e-9));
    }
}

TEST_CASE("branch and bound equals brute force on random instances", "[exact][oracle]") {
    SplitMix64 rng(11);
    int done = 0;
    while (done < 1000) {
        const int n = 1 + static_cast<int>(rng.next_below(4));
        const int m = 1 + static_cast<int>(rng.next_below(9));
        GenSpec spec;
        spec.n = n;
        spec.m = m;
        spec.seed = rng.next_u64();
        const std::uint64_t pick = rng.next_below(3);
        spec.distribution = pick == 0   ? Distribution::uniform
                            : pick == 1 ? Distribution::pareto
                                        : Distribution::correlated;
        const Instance inst = generate(spec);
        const auto brute = optimal_nw_brute(inst);
        const auto bnb = optimal_nw_bnb(inst);
        REQUIRE(bnb.proven);
        require_same_optimum(inst, brute, bnb);
        ++done;
    }
}

TEST_CASE("bnb handles zero-utility-only instances like brute", "[exact]") {
    // m < n forces an empty bundle; the fallback ranking decides.
    SplitMix64 rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(3));
        const int m = 1 + static_cast<int>(rng.next_below(n - 1));
        const Instance inst = random_instance(rng, n, m);
        const auto brute = optimal_nw_brute(inst);
        const auto bnb = optimal_nw_bnb(inst);
        REQUIRE(brute.best_log_nash == kNegInf);
        REQUIRE(brute.positive_agents == std::min(n, m));
        require_same_optimum(inst, brute, bnb);
    }
}

TEST_CASE("no method beats the exact optimum", "[exact]") {
    SplitMix64 rng(17);
    for (int trial = 0; trial < 150; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(3));
        const int m = n + static_cast<int>(rng.next_below(6));
        const Instance inst = random_instance(rng, n, m);
        const auto exact = optimal_nw_bnb(inst);
        const double opt = std::exp(exact.best_log_nash / n);
        for (const auto& alloc :
             {round_robin(inst), envy_cycle_elimination(inst), max_util(inst),
              ef1_quick_repair_fast(inst, max_util(inst), 8).alloc}) {
            REQUIRE(nash_welfare(utilities(inst, alloc)) <= opt * (1.0 + 1e-9));
        }
    }
}

TEST_CASE("bnb proves a 5x10 uniform instance within the default budget", "[exact]") {
    const Instance inst = gen_uniform(5, 10, 20240501);
    const auto res = optimal_nw_bnb(inst);
    REQUIRE(res.proven);
    REQUIRE(res.nodes_explored <= 10'000'000);
    REQUIRE(res.best_log_nash > kNegInf);
}

TEST_CASE("bnb budget exhaustion returns best-so-far unproven", "[exact]") {
    const Instance inst = gen_uniform(3, 8, 99);
    const auto res = optimal_nw_bnb(inst, 8);
    REQUIRE_FALSE(res.proven);
    REQUIRE(res.nodes_explored >= 8);
    // best-so-far is still a valid allocation of all items
    REQUIRE(res.best_alloc.owner.size() == 8);
}

TEST_CASE("n=1 bnb is a single chain", "[exact]") {
    const Instance solo(1, 5, {1, 2, 3, 4, 5});
    const auto res = optimal_nw_bnb(solo);
    REQUIRE(res.best_alloc.owner == std::vector<int>{0, 0, 0, 0, 0});
    REQUIRE(res.best_log_nash == Approx(std::log(15.0)));
}
