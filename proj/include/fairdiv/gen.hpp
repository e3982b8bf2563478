#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairdiv/core.hpp"
#include "fairdiv/prng.hpp"

namespace fairdiv {

enum class Distribution { uniform, pareto, correlated };

inline std::string to_string(Distribution d) {
    switch (d) {
        case Distribution::uniform: return "uniform";
        case Distribution::pareto: return "pareto";
        case Distribution::correlated: return "correlated";
    }
    return "?";
}

inline Distribution distribution_from_string(const std::string& s) {
    if (s == "uniform") return Distribution::uniform;
    if (s == "pareto") return Distribution::pareto;
    if (s == "correlated") return Distribution::correlated;
    throw std::invalid_argument("unknown distribution: " + s);
}

struct GenSpec {
    Distribution distribution = Distribution::uniform;
    int n = 1;
    int m = 1;
    double alpha = 3.0;  // Pareto shape
    double lambda = 0.5; // common-value weight for correlated draws
    std::uint64_t seed = 0;
    bool require_m_ge_n = false;
};

// All generators fill the valuation matrix row-major (item-major, agent
// fastest) from a single splitmix64 stream, so (spec, seed) pins the
// instance byte-for-byte.

inline Instance gen_uniform(int n, int m, std::uint64_t seed) {
    if (n < 1 || m < 1) throw std::invalid_argument("gen_uniform: n,m >= 1");
    SplitMix64 rng(seed);
    std::vector<double> v(static_cast<std::size_t>(n) * m);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(k) * n + i] = rng.next_double();
    InstanceMeta meta{"uniform", {}, seed};
    return Instance(n, m, std::move(v), meta);
}

// Inverse-CDF Pareto draws x = (1-u)^(-1/alpha) followed by per-instance
// min-max normalization onto [0,1]. Using (1-u) keeps x finite since
// u < 1 strictly.
inline Instance gen_pareto(int n, int m, double alpha, std::uint64_t seed) {
    if (n < 1 || m < 1) throw std::invalid_argument("gen_pareto: n,m >= 1");
    if (!(alpha > 0.0)) throw std::invalid_argument("gen_pareto: alpha > 0 required");
    SplitMix64 rng(seed);
    std::vector<double> v(static_cast<std::size_t>(n) * m);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i) {
            const double u = rng.next_double();
            v[static_cast<std::size_t>(k) * n + i] = std::pow(1.0 - u, -1.0 / alpha);
        }
    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi == lo) {
        std::fprintf(stderr, "gen_pareto: degenerate instance (max == min), emitting zeros\n");
        for (double& x : v) x = 0.0;
    } else {
        for (double& x : v) x = (x - lo) / (hi - lo);
    }
    InstanceMeta meta{"pareto", {{"alpha", alpha}}, seed};
    return Instance(n, m, std::move(v), meta);
}

// V(o,i) = lambda*beta_o + (1-lambda)*eps_{o,i}. All item qualities beta are
// drawn first (item order), then the noise row-major; the draw order is part
// of the format contract.
inline Instance gen_correlated(int n, int m, double lambda, std::uint64_t seed) {
    if (n < 1 || m < 1) throw std::invalid_argument("gen_correlated: n,m >= 1");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw std::invalid_argument("gen_correlated: lambda in [0,1] required");
    SplitMix64 rng(seed);
    std::vector<double> beta(m);
    for (int k = 0; k < m; ++k) beta[k] = rng.next_double();
    std::vector<double> v(static_cast<std::size_t>(n) * m);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i) {
            const double eps = rng.next_double();
            v[static_cast<std::size_t>(k) * n + i] = lambda * beta[k] + (1.0 - lambda) * eps;
        }
    InstanceMeta meta{"correlated", {{"lambda", lambda}}, seed};
    return Instance(n, m, std::move(v), meta);
}

inline Instance generate(const GenSpec& spec) {
    if (spec.require_m_ge_n && spec.m < spec.n)
        throw std::invalid_argument("generate: m >= n required by spec");
    switch (spec.distribution) {
        case Distribution::uniform: return gen_uniform(spec.n, spec.m, spec.seed);
        case Distribution::pareto: return gen_pareto(spec.n, spec.m, spec.alpha, spec.seed);
        case Distribution::correlated:
            return gen_correlated(spec.n, spec.m, spec.lambda, spec.seed);
    }
    throw std::logic_error("generate: unreachable");
}

} // namespace fairdiv
