#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairdiv/baselines.hpp"
#include "fairdiv/core.hpp"
#include "fairdiv/exact.hpp"
#include "fairdiv/fairformer.hpp"
#include "fairdiv/gen.hpp"
#include "fairdiv/json_io.hpp"
#include "fairdiv/repair.hpp"
#include "fairdiv/stats.hpp"

namespace fairdiv {

// One evaluated (instance, method) pair. Ratios are percentages of the
// instance-wise optimum. repair_passes follows the passes-with-transfers
// convention (0 = the input already satisfied EF1); the Algorithm-1 style
// counter rides along for the JSON mirror.
struct RunRecord {
    std::string instance_id;
    std::string method;
    int n = 0;
    int m = 0;
    std::string dist;
    double nash_ratio = 0.0;
    double util_ratio = 0.0;
    bool ef1 = false;
    bool efx = false;
    int repair_passes = 0;
    long long repair_transfers = 0;
    double wall_time_us = 0.0;
    // JSON-mirror extras, not part of the fixed CSV schema:
    bool nw_proven = true;
    int repair_passes_executed = 0;
};

struct CohortSpec {
    Distribution dist = Distribution::uniform;
    double alpha = 3.0;
    double lambda = 0.5;
    std::vector<std::pair<int, int>> sizes;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> methods; // default method list for the CLI
};

inline json cohort_to_json(const CohortSpec& c) {
    json sizes = json::array();
    for (auto [n, m] : c.sizes) sizes.push_back({n, m});
    json params = json::object();
    if (c.dist == Distribution::pareto) params["alpha"] = c.alpha;
    if (c.dist == Distribution::correlated) params["lambda"] = c.lambda;
    return json{{"dist", to_string(c.dist)},
                {"params", std::move(params)},
                {"sizes", std::move(sizes)},
                {"seeds", c.seeds},
                {"methods", c.methods}};
}

inline CohortSpec cohort_from_json(const json& j) {
    try {
        CohortSpec c;
        c.dist = distribution_from_string(j.at("dist").get<std::string>());
        if (j.contains("params")) {
            const auto& p = j.at("params");
            if (p.contains("alpha")) c.alpha = p.at("alpha").get<double>();
            if (p.contains("lambda")) c.lambda = p.at("lambda").get<double>();
        }
        for (const auto& s : j.at("sizes")) c.sizes.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
        c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
        return c;
    } catch (const json::exception& e) {
        throw DataError(std::string("cohort manifest: ") + e.what());
    }
}

inline Instance instance_from_cohort(const CohortSpec& c, int n, int m, std::uint64_t seed) {
    switch (c.dist) {
        case Distribution::uniform: return gen_uniform(n, m, seed);
        case Distribution::pareto: return gen_pareto(n, m, c.alpha, seed);
        case Distribution::correlated: return gen_correlated(n, m, c.lambda, seed);
    }
    throw std::logic_error("instance_from_cohort: unreachable");
}

struct MethodSpec {
    std::string kind; // rr | ece | maxutil | fairformer
    bool repair = false;
    std::shared_ptr<const ModelParams> params; // fairformer only
    std::shared_ptr<const ModelConfig> config;

    std::string display() const { return repair ? kind + "+repair" : kind; }
};

inline MethodSpec method_from_string(const std::string& s,
                                     std::shared_ptr<const ModelParams> params = nullptr,
                                     std::shared_ptr<const ModelConfig> config = nullptr) {
    MethodSpec m;
    const auto plus = s.find('+');
    m.kind = s.substr(0, plus);
    m.repair = plus != std::string::npos && s.substr(plus + 1) == "repair";
    if (plus != std::string::npos && !m.repair)
        throw std::invalid_argument("unknown method suffix in: " + s);
    if (m.kind != "rr" && m.kind != "ece" && m.kind != "maxutil" && m.kind != "fairformer")
        throw std::invalid_argument("unknown method: " + s);
    if (m.kind == "fairformer") {
        if (!params || !config)
            throw std::invalid_argument("fairformer method needs a checkpoint");
        m.params = std::move(params);
        m.config = std::move(config);
    }
    return m;
}

struct EvalOptions {
    long long node_budget = 10'000'000;
    int repair_max_passes = 8;
    int threads = 1;
};

struct MethodRun {
    DiscreteAllocation alloc;
    int passes_with_transfers = 0;
    int passes_executed = 0;
    long long transfers = 0;
};

inline MethodRun run_method(const Instance& inst, const MethodSpec& spec, int repair_max_passes) {
    MethodRun out;
    if (spec.kind == "rr") {
        out.alloc = round_robin(inst);
    } else if (spec.kind == "ece") {
        out.alloc = envy_cycle_elimination(inst);
    } else if (spec.kind == "maxutil") {
        out.alloc = max_util(inst);
    } else if (spec.kind == "fairformer") {
        out.alloc = discretize(forward(inst, *spec.params, *spec.config, spec.config->tau_final).frac);
    } else {
        throw std::invalid_argument("run_method: unknown kind " + spec.kind);
    }
    if (spec.repair) {
        RepairResult rep = ef1_quick_repair_fast(inst, std::move(out.alloc), repair_max_passes);
        out.alloc = std::move(rep.alloc);
        out.passes_with_transfers = rep.passes_with_transfers;
        out.passes_executed = rep.passes_executed;
        out.transfers = rep.transfers;
    }
    return out;
}

namespace detail {

template <typename F>
void parallel_for(int count, int threads, F&& fn) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    for (auto& th : pool) th.join();
}

inline std::string make_instance_id(const CohortSpec& c, int n, int m, std::uint64_t seed) {
    return to_string(c.dist) + "-" + std::to_string(n) + "x" + std::to_string(m) + "-s" +
           std::to_string(seed);
}

} // namespace detail

// Runs every method on every (size, seed) instance of the cohort, normalizing
// welfare by the per-instance exact optima (UW closed form, NW by
// branch-and-bound). Per-instance work is independent; records come back
// sorted by (instance_id, method) so thread count never changes the output
// (wall_time aside). Instances whose exact NW solve exhausts the node budget
// are kept with nash_ratio = nan and flagged unnormalized in the JSON mirror.
inline std::vector<RunRecord> evaluate(const CohortSpec& cohort,
                                       const std::vector<MethodSpec>& methods,
                                       const EvalOptions& opt = {}) {
    struct Job {
        int n, m;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (auto [n, m] : cohort.sizes)
        for (std::uint64_t s : cohort.seeds) jobs.push_back({n, m, s});

    std::vector<std::vector<RunRecord>> per_job(jobs.size());
    detail::parallel_for(static_cast<int>(jobs.size()), opt.threads, [&](int ji) {
        const Job& job = jobs[ji];
        const Instance inst = instance_from_cohort(cohort, job.n, job.m, job.seed);
        const std::string id = detail::make_instance_id(cohort, job.n, job.m, job.seed);

        const double uw_opt = optimal_uw(inst);
        const ExactNwResult nw = optimal_nw_bnb(inst, opt.node_budget);
        const double nw_opt =
            nw.best_log_nash == kNegInf ? 0.0 : std::exp(nw.best_log_nash / inst.agents());

        for (const MethodSpec& spec : methods) {
            const auto t0 = std::chrono::steady_clock::now();
            const MethodRun run = run_method(inst, spec, opt.repair_max_passes);
            const auto t1 = std::chrono::steady_clock::now();

            RunRecord rec;
            rec.instance_id = id;
            rec.method = spec.display();
            rec.n = job.n;
            rec.m = job.m;
            rec.dist = to_string(cohort.dist);
            rec.wall_time_us = std::chrono::duration<double, std::micro>(t1 - t0).count();

            const UtilityVector u = utilities(inst, run.alloc);
            const double nwv = nash_welfare(u);
            const double uwv = utilitarian_welfare_items(inst, run.alloc);
            rec.nw_proven = nw.proven && nw_opt > 0.0;
            rec.nash_ratio = rec.nw_proven ? 100.0 * nwv / nw_opt
                                           : std::numeric_limits<double>::quiet_NaN();
            rec.util_ratio = uw_opt > 0.0 ? 100.0 * uwv / uw_opt : 100.0;
            rec.ef1 = is_ef1(inst, run.alloc).ok;
            rec.efx = is_efx(inst, run.alloc);
            rec.repair_passes = run.passes_with_transfers;
            rec.repair_passes_executed = run.passes_executed;
            rec.repair_transfers = run.transfers;
            per_job[ji].push_back(std::move(rec));
        }
    });

    std::vector<RunRecord> records;
    for (auto& v : per_job)
        for (auto& r : v) records.push_back(std::move(r));
    std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
        if (a.instance_id != b.instance_id) return a.instance_id < b.instance_id;
        return a.method < b.method;
    });
    return records;
}

// ---- aggregation ----------------------------------------------------------

enum class GroupBy { size, ratio, pooled };

struct AggregateRow {
    std::string group;
    int count = 0;
    SummaryStats nash;
    SummaryStats util;
    SummaryStats passes;
    SummaryStats time_us;
};

inline std::string ratio_bucket(int n, int m) {
    const double r = static_cast<double>(m) / n;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", r);
    return buf;
}

// Pooled statistics run over records, not over per-config means; per-size
// tables let the other reading be checked.
inline std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records, GroupBy group) {
    std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>> groups;
    for (const RunRecord& r : records) {
        std::string key;
        switch (group) {
            case GroupBy::size: key = std::to_string(r.n) + "x" + std::to_string(r.m); break;
            case GroupBy::ratio: key = ratio_bucket(r.n, r.m); break;
            case GroupBy::pooled: key = "all"; break;
        }
        groups[{key, r.method}].push_back(&r);
    }
    std::vector<AggregateRow> rows;
    for (const auto& [key, recs] : groups) {
        AggregateRow row;
        row.group = key.first + "," + key.second;
        row.count = static_cast<int>(recs.size());
        std::vector<double> nash, util, passes, time;
        for (const RunRecord* r : recs) {
            if (!std::isnan(r->nash_ratio)) nash.push_back(r->nash_ratio);
            util.push_back(r->util_ratio);
            passes.push_back(static_cast<double>(r->repair_passes));
            time.push_back(r->wall_time_us);
        }
        row.nash = summarize(nash);
        row.util = summarize(util);
        row.passes = summarize(passes);
        row.time_us = summarize(time);
        rows.push_back(std::move(row));
    }
    return rows;
}

// Aligns two methods' records by instance id and compares a metric pairwise.
inline PairedComparison paired_stats_records(const std::vector<RunRecord>& records,
                                             const std::string& method_a,
                                             const std::string& method_b,
                                             const std::string& metric = "nash_ratio") {
    std::map<std::string, double> a_vals, b_vals;
    auto pick = [&](const RunRecord& r) {
        return metric == "util_ratio" ? r.util_ratio : r.nash_ratio;
    };
    for (const RunRecord& r : records) {
        if (std::isnan(pick(r))) continue;
        if (r.method == method_a) a_vals[r.instance_id] = pick(r);
        if (r.method == method_b) b_vals[r.instance_id] = pick(r);
    }
    std::vector<double> a, b;
    for (const auto& [id, va] : a_vals) {
        const auto it = b_vals.find(id);
        if (it == b_vals.end()) continue;
        a.push_back(va);
        b.push_back(it->second);
    }
    return paired_stats(a, b, method_a, method_b);
}

// ---- benchmarking ---------------------------------------------------------

struct BenchRow {
    std::string method;
    int n = 0;
    int m = 0;
    int repetitions = 0;
    double mean_us = 0.0;
    double median_us = 0.0;
};

struct BenchTable {
    std::vector<BenchRow> rows;
    std::string environment;
};

// Times the method itself (plus its repair when the method includes one);
// instance generation is excluded. Warmup runs are discarded.
inline BenchTable bench(const std::vector<MethodSpec>& methods,
                        const std::vector<std::pair<int, int>>& sizes, Distribution dist,
                        int repetitions, int warmup, std::uint64_t seed,
                        int repair_max_passes = 8) {
    BenchTable table;
    {
        std::ostringstream env;
        env << "compiler=" <<
#if defined(__VERSION__)
            "gcc-" __VERSION__
#else
            "unknown"
#endif
            << " build=" <<
#ifdef NDEBUG
            "release"
#else
            "debug"
#endif
            ;
        table.environment = env.str();
    }
    for (const MethodSpec& spec : methods)
        for (auto [n, m] : sizes) {
            BenchRow row;
            row.method = spec.display();
            row.n = n;
            row.m = m;
            row.repetitions = repetitions;
            if (repetitions <= 0) continue; // empty table entry by contract
            std::vector<double> times;
            times.reserve(repetitions);
            for (int r = 0; r < warmup + repetitions; ++r) {
                GenSpec gs;
                gs.distribution = dist;
                gs.n = n;
                gs.m = m;
                gs.seed = derive_seed(seed, static_cast<std::uint64_t>(r) * 7919 + n * 131 + m);
                const Instance inst = generate(gs);
                const auto t0 = std::chrono::steady_clock::now();
                const MethodRun run = run_method(inst, spec, repair_max_passes);
                const auto t1 = std::chrono::steady_clock::now();
                (void)run;
                if (r >= warmup)
                    times.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
            }
            std::vector<double> sorted = times;
            std::sort(sorted.begin(), sorted.end());
            double mean = 0.0;
            for (double t : times) mean += t;
            row.mean_us = mean / static_cast<double>(times.size());
            row.median_us = sorted.size() % 2 == 1
                                ? sorted[sorted.size() / 2]
                                : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
            table.rows.push_back(std::move(row));
        }
    return table;
}

// ---- emission -------------------------------------------------------------

inline constexpr const char* kRecordCsvHeader =
    "instance_id,method,n,m,dist,nash_ratio,util_ratio,ef1,efx,repair_passes,"
    "repair_transfers,wall_time_us";

namespace detail {
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
} // namespace detail

inline void write_records_csv(const std::vector<RunRecord>& records, std::ostream& out) {
    out << kRecordCsvHeader << '\n';
    for (const RunRecord& r : records) {
        out << r.instance_id << ',' << r.method << ',' << r.n << ',' << r.m << ',' << r.dist
            << ',' << detail::fmt_double(r.nash_ratio) << ',' << detail::fmt_double(r.util_ratio)
            << ',' << (r.ef1 ? 1 : 0) << ',' << (r.efx ? 1 : 0) << ',' << r.repair_passes << ','
            << r.repair_transfers << ',' << detail::fmt_double(r.wall_time_us) << '\n';
    }
}

inline void write_records_csv(const std::vector<RunRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    write_records_csv(records, out);
}

inline std::vector<RunRecord> read_records_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kRecordCsvHeader)
        throw DataError("records CSV: bad or missing header");
    std::vector<RunRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) f.push_back(tok);
        if (f.size() != 12) throw DataError("records CSV: wrong field count");
        RunRecord r;
        r.instance_id = f[0];
        r.method = f[1];
        r.n = std::stoi(f[2]);
        r.m = std::stoi(f[3]);
        r.dist = f[4];
        r.nash_ratio = std::stod(f[5]);
        r.util_ratio = std::stod(f[6]);
        r.ef1 = f[7] == "1";
        r.efx = f[8] == "1";
        r.repair_passes = std::stoi(f[9]);
        r.repair_transfers = std::stoll(f[10]);
        r.wall_time_us = std::stod(f[11]);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<RunRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return read_records_csv(in);
}

inline json record_to_json(const RunRecord& r) {
    return json{{"instance_id", r.instance_id},
                {"method", r.method},
                {"n", r.n},
                {"m", r.m},
                {"dist", r.dist},
                {"nash_ratio", r.nash_ratio},
                {"util_ratio", r.util_ratio},
                {"ef1", r.ef1},
                {"efx", r.efx},
                {"repair_passes", r.repair_passes},
                {"repair_passes_executed", r.repair_passes_executed},
                {"repair_transfers", r.repair_transfers},
                {"wall_time_us", r.wall_time_us},
                {"nw_proven", r.nw_proven}};
}

inline void write_records_json(const std::vector<RunRecord>& records, const std::string& path) {
    json arr = json::array();
    for (const RunRecord& r : records) arr.push_back(record_to_json(r));
    save_json_file(path, arr);
}

inline void write_aggregates_csv(const std::vector<AggregateRow>& rows, std::ostream& out) {
    out << "group,method,count,nash_mean,nash_std,nash_min,nash_max,util_mean,util_std,"
           "util_min,util_max,passes_mean,passes_max,time_mean_us\n";
    for (const AggregateRow& r : rows) {
        out << r.group << ',' << r.count << ',' << detail::fmt_double(r.nash.mean) << ','
            << detail::fmt_double(r.nash.stddev) << ',' << detail::fmt_double(r.nash.min) << ','
            << detail::fmt_double(r.nash.max) << ',' << detail::fmt_double(r.util.mean) << ','
            << detail::fmt_double(r.util.stddev) << ',' << detail::fmt_double(r.util.min) << ','
            << detail::fmt_double(r.util.max) << ',' << detail::fmt_double(r.passes.mean) << ','
            << detail::fmt_double(r.passes.max) << ',' << detail::fmt_double(r.time_us.mean)
            << '\n';
    }
}

inline void write_comparisons_csv(const std::vector<PairedComparison>& cs, std::ostream& out) {
    out << "method_a,method_b,pairs,mean_diff,ci_lo,ci_hi,cohens_d,p_t,p_wilcoxon\n";
    for (const PairedComparison& c : cs) {
        out << c.method_a << ',' << c.method_b << ',' << c.pairs << ','
            << detail::fmt_double(c.mean_diff) << ',' << detail::fmt_double(c.ci_lo) << ','
            << detail::fmt_double(c.ci_hi) << ',' << detail::fmt_double(c.cohens_d) << ','
            << detail::fmt_double(c.p_t) << ',' << detail::fmt_double(c.p_wilcoxon) << '\n';
    }
}

// Plot data in (series, x, y) triples: mean nash_ratio per items-per-agent
// bucket per method, enough to redraw the ratio curves.
inline void write_plot_data_csv(const std::vector<RunRecord>& records, std::ostream& out) {
    std::map<std::pair<std::string, std::string>, std::vector<double>> buckets;
    for (const RunRecord& r : records) {
        if (std::isnan(r.nash_ratio)) continue;
        buckets[{r.method, ratio_bucket(r.n, r.m)}].push_back(r.nash_ratio);
    }
    out << "series,x,y\n";
    for (const auto& [key, vals] : buckets) {
        const SummaryStats s = summarize(vals);
        out << key.first << ',' << key.second << ',' << detail::fmt_double(s.mean) << '\n';
    }
}

inline void write_bench_csv(const BenchTable& table, std::ostream& out) {
    out << "# " << table.environment << '\n';
    out << "method,n,m,repetitions,mean_us,median_us\n";
    for (const BenchRow& r : table.rows)
        out << r.method << ',' << r.n << ',' << r.m << ',' << r.repetitions << ','
            << detail::fmt_double(r.mean_us) << ',' << detail::fmt_double(r.median_us) << '\n';
}

} // namespace fairdiv
