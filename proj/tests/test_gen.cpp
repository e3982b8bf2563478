#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fairdiv/gen.hpp"
#include "fairdiv/prng.hpp"

using namespace fairdiv;
using Catch::Approx;

TEST_CASE("splitmix64 golden values", "[gen]") {
    // Reference sequence from the public-domain splitmix64 with seed 0,
    // widely reproduced across implementations.
    SplitMix64 rng(0);
    REQUIRE(rng.next_u64() == 0xe220a8397b1dcdafULL);
    REQUIRE(rng.next_u64() == 0x6e789e6aa1b965f4ULL);
    REQUIRE(rng.next_u64() == 0x06c45d188009454fULL);

    SplitMix64 rng2(0);
    const double u = rng2.next_double();
    REQUIRE(u == static_cast<double>(0xe220a8397b1dcdafULL >> 11) * 0x1.0p-53);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
}

TEST_CASE("uniform generator determinism and range", "[gen]") {
    const Instance a = gen_uniform(4, 9, 123);
    const Instance b = gen_uniform(4, 9, 123);
    REQUIRE(a.values() == b.values());

    const Instance c = gen_uniform(4, 9, 124);
    REQUIRE(a.values() != c.values());

    for (double v : a.values()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
    }
    REQUIRE(a.meta()->dist == "uniform");
    REQUIRE(a.meta()->seed == 123);
}

TEST_CASE("uniform sample mean", "[gen]") {
    // 10^5 entries; mean of U[0,1) must sit within 0.5 +- 0.005.
    const Instance big = gen_uniform(100, 1000, 2024);
    double mean = 0.0;
    for (double v : big.values()) mean += v;
    mean /= static_cast<double>(big.values().size());
    REQUIRE(mean == Approx(0.5).margin(0.005));
}

TEST_CASE("pareto normalization pins min 0 and max 1", "[gen]") {
    const Instance inst = gen_pareto(5, 12, 3.0, 99);
    double lo = 1e300, hi = -1e300;
    for (double v : inst.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    REQUIRE(lo == 0.0);
    REQUIRE(hi == 1.0);
    REQUIRE(inst.meta()->params.at("alpha") == 3.0);
}

TEST_CASE("raw pareto draws are right-skewed at alpha 3", "[gen]") {
    // Oracle: recompute the raw inverse-CDF stream and its empirical third
    // moment over 1e5 samples; Pareto(3) has strong positive skew.
    SplitMix64 rng(7);
    const int count = 100'000;
    std::vector<double> raw(count);
    double mean = 0.0;
    for (int i = 0; i < count; ++i) {
        raw[i] = std::pow(1.0 - rng.next_double(), -1.0 / 3.0);
        mean += raw[i];
    }
    mean /= count;
    double m2 = 0.0, m3 = 0.0;
    for (double x : raw) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= count;
    m3 /= count;
    const double skew = m3 / std::pow(m2, 1.5);
    REQUIRE(skew > 1.0);
}

TEST_CASE("pareto inverse CDF uses 1-u", "[gen]") {
    // First draw of seed 42 reproduced by hand through the same stream.
    SplitMix64 rng(42);
    const double u = rng.next_double();
    const double expected_raw = std::pow(1.0 - u, -1.0 / 3.0);
    REQUIRE(expected_raw >= 1.0);
    // The normalized instance keeps the raw ordering; verify via a 1x2
    // instance where the normalization endpoints are the two draws.
    const double u2 = rng.next_double();
    const double raw2 = std::pow(1.0 - u2, -1.0 / 3.0);
    const Instance inst = gen_pareto(2, 1, 3.0, 42);
    const bool first_is_max = expected_raw > raw2;
    REQUIRE(inst.value(0, first_is_max ? 0 : 1) == 1.0);
    REQUIRE(inst.value(0, first_is_max ? 1 : 0) == 0.0);
}

TEST_CASE("correlated generator limits", "[gen]") {
    // lambda = 1: rows constant across agents.
    const Instance common = gen_correlated(5, 8, 1.0, 5);
    for (int k = 0; k < common.items(); ++k)
        for (int i = 1; i < common.agents(); ++i)
            REQUIRE(common.value(k, i) == common.value(k, 0));

    // lambda = 0: identical to the uniform stream after the m beta draws.
    const Instance noise = gen_correlated(3, 4, 0.0, 5);
    SplitMix64 rng(5);
    for (int k = 0; k < 4; ++k) rng.next_double(); // skip the beta draws
    for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 3; ++i) REQUIRE(noise.value(k, i) == rng.next_double());

    for (double v : gen_correlated(4, 6, 0.5, 77).values()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
    }
}

TEST_CASE("correlated lambda=0.5 raises cross-agent correlation", "[gen]") {
    // Per-item cross-agent agreement: correlation between two agents' value
    // columns across many items, compared against the lambda = 0 baseline.
    auto column_corr = [](const Instance& inst) {
        const int m = inst.items();
        double ma = 0, mb = 0;
        for (int k = 0; k < m; ++k) {
            ma += inst.value(k, 0);
            mb += inst.value(k, 1);
        }
        ma /= m;
        mb /= m;
        double cab = 0, ca = 0, cb = 0;
        for (int k = 0; k < m; ++k) {
            const double da = inst.value(k, 0) - ma;
            const double db = inst.value(k, 1) - mb;
            cab += da * db;
            ca += da * da;
            cb += db * db;
        }
        return cab / std::sqrt(ca * cb);
    };
    const double corr_half = column_corr(gen_correlated(2, 50'000, 0.5, 13));
    const double corr_zero = column_corr(gen_correlated(2, 50'000, 0.0, 13));
    REQUIRE(corr_half > corr_zero + 0.2);
    REQUIRE(corr_half > 0.2);
}

TEST_CASE("stream independence across instance sizes", "[gen]") {
    const Instance a1 = gen_uniform(3, 6, 1001);
    const Instance b1 = gen_uniform(5, 10, 1002);
    const Instance b2 = gen_uniform(5, 10, 1002);
    const Instance a2 = gen_uniform(3, 6, 1001);
    REQUIRE(a1.values() == a2.values());
    REQUIRE(b1.values() == b2.values());
}

TEST_CASE("gen spec validation", "[gen]") {
    GenSpec spec;
    spec.n = 5;
    spec.m = 3;
    spec.require_m_ge_n = true;
    REQUIRE_THROWS_AS(generate(spec), std::invalid_argument);
    spec.require_m_ge_n = false;
    REQUIRE_NOTHROW(generate(spec));
    REQUIRE_THROWS_AS(gen_pareto(2, 2, 0.0, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(gen_correlated(2, 2, 1.5, 1), std::invalid_argument);
}
