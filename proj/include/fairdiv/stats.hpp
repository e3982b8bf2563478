#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairdiv {

namespace stats_detail {

// Regularized incomplete beta I_x(a,b) via the standard Lentz continued
// fraction, symmetric form for convergence.
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

} // namespace stats_detail

inline double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * stats_detail::betacf(a, b, x) / a;
    return 1.0 - front * stats_detail::betacf(b, a, 1.0 - x) / b;
}

inline double student_t_cdf(double t, double df) {
    if (df <= 0.0) throw std::invalid_argument("student_t_cdf: df > 0 required");
    const double x = df / (df + t * t);
    const double tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

inline double student_t_two_sided_p(double t, double df) {
    const double x = df / (df + t * t);
    return regularized_incomplete_beta(df / 2.0, 0.5, x);
}

// Upper quantile for two-sided confidence intervals, by bisection on the CDF.
inline double student_t_quantile(double p, double df) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("student_t_quantile: p in (0,1)");
    double lo = -1e6, hi = 1e6;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, df) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Two-sided Wilcoxon signed-rank test. Zero differences are dropped; ties
// get midranks. Exact null distribution by dynamic programming over doubled
// ranks when at most `exact_limit` nonzero pairs remain, otherwise the
// normal approximation with tie correction.
inline double wilcoxon_signed_rank_p(const std::vector<double>& diffs, int exact_limit = 25) {
    std::vector<double> absd;
    std::vector<int> sign;
    for (double d : diffs) {
        if (d == 0.0) continue;
        absd.push_back(std::abs(d));
        sign.push_back(d > 0.0 ? 1 : -1);
    }
    const int k = static_cast<int>(absd.size());
    if (k == 0) return 1.0;

    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return absd[a] < absd[b]; });

    // Midranks doubled so every rank is integral.
    std::vector<int> rank2(k, 0);
    std::vector<int> tie_sizes;
    int pos = 0;
    while (pos < k) {
        int end = pos;
        while (end + 1 < k && absd[idx[end + 1]] == absd[idx[pos]]) ++end;
        const int count = end - pos + 1;
        const int sum2 = (pos + 1 + end + 1); // doubled average of ranks pos+1..end+1
        for (int q = pos; q <= end; ++q) rank2[idx[q]] = sum2;
        tie_sizes.push_back(count);
        pos = end + 1;
    }

    long long w2_plus = 0;
    long long total2 = 0;
    for (int i = 0; i < k; ++i) {
        total2 += rank2[i];
        if (sign[i] > 0) w2_plus += rank2[i];
    }

    if (k <= exact_limit) {
        // Counts of sign assignments reaching each doubled rank sum.
        std::vector<double> dp(static_cast<std::size_t>(total2) + 1, 0.0);
        dp[0] = 1.0;
        long long reach = 0;
        for (int i = 0; i < k; ++i) {
            reach += rank2[i];
            for (long long s = reach; s >= rank2[i]; --s) dp[s] += dp[s - rank2[i]];
        }
        const double denom = std::pow(2.0, k);
        double cdf_le = 0.0, cdf_ge = 0.0;
        for (long long s = 0; s <= total2; ++s) {
            if (s <= w2_plus) cdf_le += dp[s];
            if (s >= w2_plus) cdf_ge += dp[s];
        }
        return std::min(1.0, 2.0 * std::min(cdf_le, cdf_ge) / denom);
    }

    const double n = k;
    const double mean = n * (n + 1.0) / 4.0;
    double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    for (int t : tie_sizes)
        var -= (static_cast<double>(t) * t * t - t) / 48.0;
    if (var <= 0.0) return 1.0;
    const double w_plus = static_cast<double>(w2_plus) / 2.0;
    const double z = (w_plus - mean) / std::sqrt(var);
    return std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(z))));
}

struct PairedComparison {
    std::string method_a;
    std::string method_b;
    int pairs = 0;
    double mean_diff = 0.0; // a minus b, in percentage points for ratio metrics
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double cohens_d = 0.0; // paired: mean diff / std of diffs (0 when degenerate)
    double p_t = 1.0;
    double p_wilcoxon = 1.0;
};

// Paired t machinery over aligned samples. Degenerate guards: identical
// samples report d = 0 and p = 1; zero-variance nonzero differences report
// the point CI [c, c] and p -> 0.
inline PairedComparison paired_stats(const std::vector<double>& a, const std::vector<double>& b,
                                     std::string name_a = "A", std::string name_b = "B") {
    if (a.size() != b.size()) throw std::invalid_argument("paired_stats: unequal lengths");
    if (a.size() < 2) throw std::invalid_argument("paired_stats: need at least 2 pairs");

    PairedComparison out;
    out.method_a = std::move(name_a);
    out.method_b = std::move(name_b);
    out.pairs = static_cast<int>(a.size());

    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(d.size());
    double ss = 0.0;
    for (double x : d) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (static_cast<double>(d.size()) - 1.0));
    out.mean_diff = mean;

    const double df = static_cast<double>(d.size()) - 1.0;
    if (sd == 0.0) {
        out.ci_lo = out.ci_hi = mean;
        out.cohens_d = 0.0;
        out.p_t = mean == 0.0 ? 1.0 : 0.0;
        out.p_wilcoxon = wilcoxon_signed_rank_p(d);
        return out;
    }
    const double se = sd / std::sqrt(static_cast<double>(d.size()));
    const double tcrit = student_t_quantile(0.975, df);
    out.ci_lo = mean - tcrit * se;
    out.ci_hi = mean + tcrit * se;
    out.cohens_d = mean / sd;
    out.p_t = student_t_two_sided_p(mean / se, df);
    out.p_wilcoxon = wilcoxon_signed_rank_p(d);
    return out;
}

struct SummaryStats {
    double mean = 0.0;
    double stddev = 0.0; // sample std (n-1); 0 for singleton groups
    double min = 0.0;
    double max = 0.0;
    int count = 0;
};

inline SummaryStats summarize(const std::vector<double>& xs) {
    SummaryStats s;
    s.count = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    s.min = xs[0];
    s.max = xs[0];
    for (double x : xs) {
        s.mean += x;
        s.min = std::min(s.min, x);
        s.max = std::max(s.max, x);
    }
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0));
    }
    return s;
}

} // namespace fairdiv
