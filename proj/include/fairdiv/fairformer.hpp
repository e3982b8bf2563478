#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairdiv/core.hpp"
#include "fairdiv/gen.hpp"
#include "fairdiv/prng.hpp"
#include "fairdiv/tensor.hpp"

namespace fairdiv {

struct ModelConfig {
    int d_model = 32;
    int heads = 4;
    int enc_layers = 1; // L: self-attention layers per tower
    int out_layers = 1; // K: item refinement layers after fusion
    double dropout = 0.0;
    int glu_width = 0; // 0 resolves to ceil(8/3 * d_model)

    double tau0 = 1.0;
    double tau_final = 0.05;
    int train_steps = 2000;
    int batch_size = 32;
    double lr = 3e-4;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double eps_util = 1e-8;
    std::uint64_t seed = 0;

    Distribution train_dist = Distribution::uniform;
    double train_alpha = 3.0;
    double train_lambda = 0.5;
    std::vector<std::pair<int, int>> train_sizes = {{3, 6}}; // sampled uniformly, m >= n

    int resolved_glu_width() const {
        return glu_width > 0 ? glu_width
                             : static_cast<int>(std::ceil(8.0 / 3.0 * d_model));
    }

    void validate() const {
        if (d_model < 1 || heads < 1 || d_model % heads != 0)
            throw std::invalid_argument("ModelConfig: d_model must be divisible by heads");
        if (enc_layers < 0 || out_layers < 0)
            throw std::invalid_argument("ModelConfig: layer counts must be >= 0");
        if (!(tau0 >= tau_final && tau_final > 0.0))
            throw std::invalid_argument("ModelConfig: need tau0 >= tau_final > 0");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw std::invalid_argument("ModelConfig: dropout in [0,1)");
        if (train_sizes.empty())
            throw std::invalid_argument("ModelConfig: train_sizes must be nonempty");
        for (auto [n, m] : train_sizes)
            if (n < 1 || m < n)
                throw std::invalid_argument("ModelConfig: train sizes need m >= n >= 1");
    }
};

// Presets matching the published configurations, plus the desk-scale preset
// used by the acceptance run.
inline ModelConfig preset_small_10x20() {
    ModelConfig c;
    c.d_model = 256;
    c.heads = 8;
    c.enc_layers = 1;
    c.out_layers = 2;
    c.dropout = 0.0;
    c.train_sizes = {{10, 20}};
    return c;
}

inline ModelConfig preset_medium_30x60() {
    ModelConfig c;
    c.d_model = 128;
    c.heads = 8;
    c.enc_layers = 3;
    c.out_layers = 2;
    c.dropout = 0.099;
    c.train_sizes = {{30, 60}};
    return c;
}

inline ModelConfig preset_tiny_3x6() {
    ModelConfig c;
    c.d_model = 32;
    c.heads = 4;
    c.enc_layers = 1;
    c.out_layers = 1;
    c.dropout = 0.0;
    c.train_steps = 2000;
    c.batch_size = 32;
    c.train_sizes = {{3, 6}};
    return c;
}

inline ModelConfig preset_by_name(const std::string& name) {
    if (name == "tiny_3x6") return preset_tiny_3x6();
    if (name == "small_10x20") return preset_small_10x20();
    if (name == "medium_30x60") return preset_medium_30x60();
    throw std::invalid_argument("unknown preset: " + name);
}

namespace ffdetail {

enum class Init { zeros, ones, normal, one_scalar };

struct ParamInfo {
    std::string name;
    int rows;
    int cols;
    Init init;
};

inline void push_block(std::vector<ParamInfo>& out, const std::string& prefix,
                       const ModelConfig& cfg, bool cross) {
    const int d = cfg.d_model;
    const int hd = d / cfg.heads;
    const int g = cfg.resolved_glu_width();
    if (cross) {
        out.push_back({prefix + ".normq.g", 1, d, Init::ones});
        out.push_back({prefix + ".normkv.g", 1, d, Init::ones});
    } else {
        out.push_back({prefix + ".norm1.g", 1, d, Init::ones});
    }
    for (int h = 0; h < cfg.heads; ++h)
        out.push_back({prefix + ".attn.wq." + std::to_string(h), d, hd, Init::normal});
    for (int h = 0; h < cfg.heads; ++h)
        out.push_back({prefix + ".attn.wk." + std::to_string(h), d, hd, Init::normal});
    for (int h = 0; h < cfg.heads; ++h)
        out.push_back({prefix + ".attn.wv." + std::to_string(h), d, hd, Init::normal});
    out.push_back({prefix + ".attn.wo", d, d, Init::zeros});
    out.push_back({prefix + ".norm2.g", 1, d, Init::ones});
    out.push_back({prefix + ".glu.gate", d, g, Init::normal});
    out.push_back({prefix + ".glu.up", d, g, Init::normal});
    out.push_back({prefix + ".glu.down", g, d, Init::zeros});
}

} // namespace ffdetail

inline constexpr int kEntryFeatures = 7; // value + row mean/max/min + col mean/max/min

// Learned weights. Tensor order is fixed by layout(); serialization and the
// optimizer both iterate in this order.
struct ModelParams {
    std::vector<ad::Tensor> tensors;

    static std::vector<ffdetail::ParamInfo> layout(const ModelConfig& cfg) {
        cfg.validate();
        std::vector<ffdetail::ParamInfo> out;
        out.push_back({"embed.w", kEntryFeatures, cfg.d_model, ffdetail::Init::normal});
        out.push_back({"embed.b", 1, cfg.d_model, ffdetail::Init::zeros});
        for (int l = 0; l < cfg.enc_layers; ++l)
            ffdetail::push_block(out, "agent_tower." + std::to_string(l), cfg, false);
        for (int l = 0; l < cfg.enc_layers; ++l)
            ffdetail::push_block(out, "item_tower." + std::to_string(l), cfg, false);
        ffdetail::push_block(out, "cross", cfg, true);
        for (int l = 0; l < cfg.out_layers; ++l)
            ffdetail::push_block(out, "refine." + std::to_string(l), cfg, false);
        out.push_back({"final_norm.g", 1, cfg.d_model, ffdetail::Init::ones});
        out.push_back({"residual_scale", 1, 1, ffdetail::Init::one_scalar});
        return out;
    }

    // Residual-identity start: attention/GLU output projections are zero so
    // every block is the identity at step 0 and S reduces to alpha * V plus
    // the untrained bilinear term.
    static ModelParams init(const ModelConfig& cfg) {
        const auto defs = layout(cfg);
        SplitMix64 rng(derive_seed(cfg.seed, 0x1a17));
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
        ModelParams p;
        p.tensors.reserve(defs.size());
        for (const auto& def : defs) {
            ad::Tensor t(def.rows, def.cols, 0.0);
            switch (def.init) {
                case ffdetail::Init::zeros: break;
                case ffdetail::Init::ones:
                case ffdetail::Init::one_scalar:
                    for (double& x : t.data) x = 1.0;
                    break;
                case ffdetail::Init::normal:
                    for (double& x : t.data) x = std_dev * rng.next_gaussian();
                    break;
            }
            p.tensors.push_back(std::move(t));
        }
        return p;
    }

    // Every tensor nonzero; used by equivariance and serialization tests
    // where a zero bilinear branch would make the check vacuous.
    static ModelParams random(const ModelConfig& cfg, std::uint64_t seed) {
        const auto defs = layout(cfg);
        SplitMix64 rng(derive_seed(seed, 0x7e57));
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
        ModelParams p;
        p.tensors.reserve(defs.size());
        for (const auto& def : defs) {
            ad::Tensor t(def.rows, def.cols, 0.0);
            for (double& x : t.data) x = std_dev * rng.next_gaussian();
            p.tensors.push_back(std::move(t));
        }
        return p;
    }

    std::size_t scalar_count() const {
        std::size_t s = 0;
        for (const auto& t : tensors) s += t.size();
        return s;
    }
};

// Per-entry feature grid for the exchangeable projection: the raw value,
// that item's mean/max/min across agents, and that agent's mean/max/min
// across items. Rows are (item, agent) pairs in row-major order.
inline ad::Tensor entry_features(const Instance& inst) {
    const int n = inst.agents();
    const int m = inst.items();
    std::vector<double> row_mean(m, 0.0), row_max(m, kNegInf), row_min(m);
    std::vector<double> col_mean(n, 0.0), col_max(n, kNegInf), col_min(n);
    for (int k = 0; k < m; ++k) {
        row_min[k] = inst.value(k, 0);
        for (int i = 0; i < n; ++i) {
            const double v = inst.value(k, i);
            row_mean[k] += v;
            row_max[k] = std::max(row_max[k], v);
            row_min[k] = std::min(row_min[k], v);
        }
        row_mean[k] /= n;
    }
    for (int i = 0; i < n; ++i) {
        col_min[i] = inst.value(0, i);
        for (int k = 0; k < m; ++k) {
            const double v = inst.value(k, i);
            col_mean[i] += v;
            col_max[i] = std::max(col_max[i], v);
            col_min[i] = std::min(col_min[i], v);
        }
        col_mean[i] /= m;
    }
    ad::Tensor f(m * n, kEntryFeatures);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i) {
            const int r = k * n + i;
            f.at(r, 0) = inst.value(k, i);
            f.at(r, 1) = row_mean[k];
            f.at(r, 2) = row_max[k];
            f.at(r, 3) = row_min[k];
            f.at(r, 4) = col_mean[i];
            f.at(r, 5) = col_max[i];
            f.at(r, 6) = col_min[i];
        }
    return f;
}

namespace ffdetail {

inline ad::Tensor agent_pool_matrix(int m, int n) {
    ad::Tensor p(n, m * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < m; ++k) p.at(i, k * n + i) = 1.0 / m;
    return p;
}

inline ad::Tensor item_pool_matrix(int m, int n) {
    ad::Tensor p(m, m * n, 0.0);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i) p.at(k, k * n + i) = 1.0 / n;
    return p;
}

// Inverted-keep-probability dropout masks, drawn from a dedicated stream in
// graph construction order.
struct DropoutStream {
    double p = 0.0;
    SplitMix64 rng{0};

    bool active() const { return p > 0.0; }
};

struct GraphContext {
    ad::Tape& tape;
    const ModelConfig& cfg;
    const std::map<std::string, ad::Tape::NodeId>& params;
    DropoutStream* drop = nullptr;

    ad::Tape::NodeId at(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw std::logic_error("missing parameter: " + name);
        return it->second;
    }

    ad::Tape::NodeId maybe_dropout(ad::Tape::NodeId x) {
        if (drop == nullptr || !drop->active()) return x;
        const ad::Tensor& v = tape.value(x);
        ad::Tensor mask(v.rows, v.cols);
        const double keep = 1.0 - drop->p;
        for (double& e : mask.data) e = drop->rng.next_double() >= drop->p ? 1.0 / keep : 0.0;
        return tape.mul(x, tape.input(std::move(mask), false));
    }
};

inline ad::Tape::NodeId mha(GraphContext& ctx, const std::string& prefix, ad::Tape::NodeId q_in,
                            ad::Tape::NodeId kv_in) {
    ad::Tape& t = ctx.tape;
    const int hd = ctx.cfg.d_model / ctx.cfg.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<ad::Tape::NodeId> heads;
    for (int h = 0; h < ctx.cfg.heads; ++h) {
        const std::string hs = std::to_string(h);
        const auto Q = t.matmul(q_in, ctx.at(prefix + ".attn.wq." + hs));
        const auto K = t.matmul(kv_in, ctx.at(prefix + ".attn.wk." + hs));
        const auto V = t.matmul(kv_in, ctx.at(prefix + ".attn.wv." + hs));
        auto attn = t.softmax_rows(t.scale(t.matmul(Q, t.transpose(K)), inv_sqrt), 1.0);
        attn = ctx.maybe_dropout(attn);
        heads.push_back(t.matmul(attn, V));
    }
    return t.matmul(t.concat_cols(heads), ctx.at(prefix + ".attn.wo"));
}

inline ad::Tape::NodeId glu_ffn(GraphContext& ctx, const std::string& prefix,
                                ad::Tape::NodeId x) {
    ad::Tape& t = ctx.tape;
    const auto gated = t.mul(t.silu(t.matmul(x, ctx.at(prefix + ".glu.gate"))),
                             t.matmul(x, ctx.at(prefix + ".glu.up")));
    return ctx.maybe_dropout(t.matmul(gated, ctx.at(prefix + ".glu.down")));
}

// Pre-norm residual block: x_hat = x + MHA(Norm(x)); y = x_hat + GLU(Norm(x_hat)).
inline ad::Tape::NodeId self_attn_block(GraphContext& ctx, const std::string& prefix,
                                        ad::Tape::NodeId x) {
    ad::Tape& t = ctx.tape;
    const auto xn = t.rmsnorm_rows(x, ctx.at(prefix + ".norm1.g"));
    const auto xhat = t.add(x, mha(ctx, prefix, xn, xn));
    const auto yn = t.rmsnorm_rows(xhat, ctx.at(prefix + ".norm2.g"));
    return t.add(xhat, glu_ffn(ctx, prefix, yn));
}

inline ad::Tape::NodeId cross_attn_block(GraphContext& ctx, const std::string& prefix,
                                         ad::Tape::NodeId q, ad::Tape::NodeId kv) {
    ad::Tape& t = ctx.tape;
    const auto qn = t.rmsnorm_rows(q, ctx.at(prefix + ".normq.g"));
    const auto kvn = t.rmsnorm_rows(kv, ctx.at(prefix + ".normkv.g"));
    const auto xhat = t.add(q, mha(ctx, prefix, qn, kvn));
    const auto yn = t.rmsnorm_rows(xhat, ctx.at(prefix + ".norm2.g"));
    return t.add(xhat, glu_ffn(ctx, prefix, yn));
}

} // namespace ffdetail

// Tokenization step on its own: the entry grid is embedded by the shared
// exchangeable projection, then agent tokens pool over items and item tokens
// pool over agents.
inline std::pair<ad::Tensor, ad::Tensor> exchangeable_embed(const Instance& inst,
                                                            const ModelParams& params,
                                                            const ModelConfig& cfg) {
    const auto defs = ModelParams::layout(cfg);
    const ad::Tensor* w = nullptr;
    const ad::Tensor* b = nullptr;
    for (std::size_t i = 0; i < defs.size(); ++i) {
        if (defs[i].name == "embed.w") w = &params.tensors[i];
        if (defs[i].name == "embed.b") b = &params.tensors[i];
    }
    ad::Tape tape;
    const auto E = tape.linear(tape.input(entry_features(inst), false), tape.input(*w, false),
                               tape.input(*b, false));
    const auto H = tape.matmul(
        tape.input(ffdetail::agent_pool_matrix(inst.items(), inst.agents()), false), E);
    const auto I = tape.matmul(
        tape.input(ffdetail::item_pool_matrix(inst.items(), inst.agents()), false), E);
    return {tape.value(H), tape.value(I)};
}

// Binds every parameter tensor onto the tape; requires_grad controls whether
// backward() materializes their adjoints.
inline std::map<std::string, ad::Tape::NodeId> bind_params(ad::Tape& tape,
                                                           const ModelParams& params,
                                                           const ModelConfig& cfg,
                                                           bool requires_grad) {
    const auto defs = ModelParams::layout(cfg);
    if (defs.size() != params.tensors.size())
        throw std::invalid_argument("bind_params: parameter count mismatch");
    std::map<std::string, ad::Tape::NodeId> map;
    for (std::size_t i = 0; i < defs.size(); ++i) {
        const auto& t = params.tensors[i];
        if (t.rows != defs[i].rows || t.cols != defs[i].cols)
            throw std::invalid_argument("bind_params: shape mismatch for " + defs[i].name);
        map[defs[i].name] = tape.input(t, requires_grad);
    }
    return map;
}

struct ForwardNodes {
    ad::Tape::NodeId scores; // m x n modified utility matrix S
    ad::Tape::NodeId frac;   // softmax_rows(S / tau)
    ad::Tape::NodeId valuation; // the V input node (shared with the loss)
};

// Builds the full FairFormer graph for one instance: exchangeable embedding,
// L self-attention layers per tower, item-to-agent cross-attention, K item
// refinement layers, normalization, bilinear compatibility plus the alpha*V
// residual, and the temperature softmax.
inline ForwardNodes forward_on_tape(ad::Tape& tape,
                                    const std::map<std::string, ad::Tape::NodeId>& params,
                                    const ModelConfig& cfg, const Instance& inst, double tau,
                                    ffdetail::DropoutStream* drop = nullptr) {
    const int n = inst.agents();
    const int m = inst.items();
    ffdetail::GraphContext ctx{tape, cfg, params, drop};

    const auto F = tape.input(entry_features(inst), false);
    const auto E = tape.linear(F, ctx.at("embed.w"), ctx.at("embed.b")); // (m*n, d)
    auto H = tape.matmul(tape.input(ffdetail::agent_pool_matrix(m, n), false), E); // (n, d)
    auto I = tape.matmul(tape.input(ffdetail::item_pool_matrix(m, n), false), E);  // (m, d)

    for (int l = 0; l < cfg.enc_layers; ++l)
        H = ffdetail::self_attn_block(ctx, "agent_tower." + std::to_string(l), H);
    for (int l = 0; l < cfg.enc_layers; ++l)
        I = ffdetail::self_attn_block(ctx, "item_tower." + std::to_string(l), I);

    auto Z = ffdetail::cross_attn_block(ctx, "cross", I, H);
    for (int l = 0; l < cfg.out_layers; ++l)
        Z = ffdetail::self_attn_block(ctx, "refine." + std::to_string(l), Z);

    const auto Zt = tape.rmsnorm_rows(Z, ctx.at("final_norm.g"));
    const auto D = tape.matmul(Zt, tape.transpose(H)); // (m, n)

    ad::Tensor vmat(m, n, inst.values());
    const auto Vn = tape.input(std::move(vmat), false);
    const auto alpha_grid =
        tape.broadcast_row(tape.broadcast_col(ctx.at("residual_scale"), n), m);
    const auto S = tape.add(D, tape.mul(alpha_grid, Vn));
    const auto A = tape.softmax_rows(S, tau);
    return {S, A, Vn};
}

struct ForwardResult {
    FractionalAllocation frac;
    std::vector<double> scores; // m x n row-major
};

// Inference entry point: dropout off, no gradients, pure in (params, V, tau).
inline ForwardResult forward(const Instance& inst, const ModelParams& params,
                             const ModelConfig& cfg, double tau) {
    ad::Tape tape;
    const auto nodes = forward_on_tape(tape, bind_params(tape, params, cfg, false), cfg, inst,
                                       tau, nullptr);
    ForwardResult out;
    out.scores = tape.value(nodes.scores).data;
    out.frac.m = inst.items();
    out.frac.n = inst.agents();
    out.frac.probs = tape.value(nodes.frac).data;
    return out;
}

// Loss term for one instance: -(1/n) sum_i ln(u_i + eps) with fractional
// utilities u = colsum(V ⊙ A). Batch terms are averaged by the caller.
inline ad::Tape::NodeId nw_loss_term(ad::Tape& tape, const ForwardNodes& nodes, int n,
                                     double eps_util) {
    const auto u = tape.col_sum(tape.mul(nodes.valuation, nodes.frac)); // (1, n)
    const auto shifted = tape.add(u, tape.input(ad::Tensor(1, n, eps_util), false));
    return tape.scale(tape.sum_all(tape.log(shifted)), -1.0 / n);
}

// Eager value of the batch loss; mirrors the tape construction exactly.
inline double nw_loss_value(const std::vector<Instance>& batch,
                            const std::vector<FractionalAllocation>& fracs, double eps_util) {
    if (batch.empty() || batch.size() != fracs.size())
        throw std::invalid_argument("nw_loss_value: batch mismatch");
    double total = 0.0;
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const UtilityVector u = utilities(batch[r], fracs[r]);
        double s = 0.0;
        for (double x : u) s += std::log(x + eps_util);
        total += -s / static_cast<double>(u.size());
    }
    return total / static_cast<double>(batch.size());
}

// Geometric interpolation from tau0 to tau_final across the horizon.
inline double tau_schedule(int step, const ModelConfig& cfg) {
    if (step < 0 || step > cfg.train_steps)
        throw std::invalid_argument("tau_schedule: step out of range");
    if (cfg.train_steps == 0) return cfg.tau0;
    const double frac = static_cast<double>(step) / cfg.train_steps;
    return cfg.tau0 * std::pow(cfg.tau_final / cfg.tau0, frac);
}

using InstanceSampler = std::function<Instance(int step, int index_in_batch)>;

// Deterministic default sampler: each (step, b) slot derives its own seed
// and size choice from the config seed, so batches are reproducible and
// independent of evaluation order.
inline InstanceSampler make_default_sampler(const ModelConfig& cfg) {
    return [cfg](int step, int b) {
        SplitMix64 slot(derive_seed(cfg.seed ^ 0x7261696eULL,
                                    static_cast<std::uint64_t>(step) * cfg.batch_size + b));
        const auto [n, m] =
            cfg.train_sizes[slot.next_below(cfg.train_sizes.size())];
        const std::uint64_t inst_seed = slot.next_u64();
        switch (cfg.train_dist) {
            case Distribution::uniform: return gen_uniform(n, m, inst_seed);
            case Distribution::pareto: return gen_pareto(n, m, cfg.train_alpha, inst_seed);
            case Distribution::correlated:
                return gen_correlated(n, m, cfg.train_lambda, inst_seed);
        }
        throw std::logic_error("sampler: unreachable");
    };
}

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_trace;
};

// End-to-end training: T steps of sample-forward-loss-backward plus a
// decoupled-weight-decay adaptive-moment update, annealing the softmax
// temperature along the way. Fully reproducible from (config, seed).
inline TrainResult train(const ModelConfig& cfg, InstanceSampler sampler = nullptr) {
    cfg.validate();
    if (!sampler) sampler = make_default_sampler(cfg);

    ModelParams params = ModelParams::init(cfg);
    const auto defs = ModelParams::layout(cfg);

    std::vector<ad::Tensor> m1, m2;
    m1.reserve(params.tensors.size());
    m2.reserve(params.tensors.size());
    for (const auto& t : params.tensors) {
        m1.emplace_back(t.rows, t.cols, 0.0);
        m2.emplace_back(t.rows, t.cols, 0.0);
    }

    TrainResult out;
    out.loss_trace.reserve(cfg.train_steps);

    for (int step = 0; step < cfg.train_steps; ++step) {
        const double tau = tau_schedule(step, cfg);
        ffdetail::DropoutStream drop{cfg.dropout,
                                     SplitMix64(derive_seed(cfg.seed ^ 0xd60ULL, step))};

        ad::Tape tape;
        const auto pmap = bind_params(tape, params, cfg, true);
        ad::Tape::NodeId loss = -1;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Instance inst = sampler(step, b);
            const auto nodes = forward_on_tape(tape, pmap, cfg, inst, tau,
                                               cfg.dropout > 0.0 ? &drop : nullptr);
            const auto term = nw_loss_term(tape, nodes, inst.agents(), cfg.eps_util);
            loss = b == 0 ? term : tape.add(loss, term);
        }
        loss = tape.scale(loss, 1.0 / cfg.batch_size);

        const double loss_value = tape.value(loss).data[0];
        if (!std::isfinite(loss_value))
            throw std::runtime_error("train: loss diverged (non-finite) at step " +
                                     std::to_string(step) + ", tau=" + std::to_string(tau));
        out.loss_trace.push_back(loss_value);

        const auto grads = tape.backward(loss);

        const double t = static_cast<double>(step + 1);
        const double bias1 = 1.0 - std::pow(cfg.adam_beta1, t);
        const double bias2 = 1.0 - std::pow(cfg.adam_beta2, t);
        for (std::size_t p = 0; p < params.tensors.size(); ++p) {
            const auto it = pmap.find(defs[p].name);
            const ad::Tensor& g = grads[it->second];
            auto& w = params.tensors[p].data;
            auto& mo1 = m1[p].data;
            auto& mo2 = m2[p].data;
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double gk = g.data.empty() ? 0.0 : g.data[k];
                mo1[k] = cfg.adam_beta1 * mo1[k] + (1.0 - cfg.adam_beta1) * gk;
                mo2[k] = cfg.adam_beta2 * mo2[k] + (1.0 - cfg.adam_beta2) * gk * gk;
                const double mhat = mo1[k] / bias1;
                const double vhat = mo2[k] / bias2;
                w[k] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                                  cfg.weight_decay * w[k]);
            }
        }
    }

    out.params = std::move(params);
    return out;
}

// ---- checkpoint I/O ------------------------------------------------------

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
    nlohmann::json sizes = nlohmann::json::array();
    for (auto [n, m] : cfg.train_sizes) sizes.push_back({n, m});
    return nlohmann::json{{"d_model", cfg.d_model},
                          {"heads", cfg.heads},
                          {"enc_layers", cfg.enc_layers},
                          {"out_layers", cfg.out_layers},
                          {"dropout", cfg.dropout},
                          {"glu_width", cfg.glu_width},
                          {"tau0", cfg.tau0},
                          {"tau_final", cfg.tau_final},
                          {"train_steps", cfg.train_steps},
                          {"batch_size", cfg.batch_size},
                          {"lr", cfg.lr},
                          {"weight_decay", cfg.weight_decay},
                          {"adam_beta1", cfg.adam_beta1},
                          {"adam_beta2", cfg.adam_beta2},
                          {"adam_eps", cfg.adam_eps},
                          {"eps_util", cfg.eps_util},
                          {"seed", cfg.seed},
                          {"train_dist", to_string(cfg.train_dist)},
                          {"train_alpha", cfg.train_alpha},
                          {"train_lambda", cfg.train_lambda},
                          {"train_sizes", std::move(sizes)}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.heads = j.at("heads").get<int>();
    c.enc_layers = j.at("enc_layers").get<int>();
    c.out_layers = j.at("out_layers").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.glu_width = j.at("glu_width").get<int>();
    c.tau0 = j.at("tau0").get<double>();
    c.tau_final = j.at("tau_final").get<double>();
    c.train_steps = j.at("train_steps").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.eps_util = j.at("eps_util").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.train_dist = distribution_from_string(j.at("train_dist").get<std::string>());
    c.train_alpha = j.at("train_alpha").get<double>();
    c.train_lambda = j.at("train_lambda").get<double>();
    c.train_sizes.clear();
    for (const auto& s : j.at("train_sizes"))
        c.train_sizes.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
    return c;
}

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr char kCkptMagic[8] = {'F', 'F', 'C', 'K', 'P', 'T', '0', '1'};

// Single-file format: 8-byte magic, u64 little-endian manifest length, JSON
// manifest (config + tensor table with offsets in doubles), then the raw
// little-endian float64 buffer. Round-trips bit-exactly.
inline void save_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                            const std::string& path) {
    static_assert(sizeof(double) == 8);
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint format is little-endian");
    const auto defs = ModelParams::layout(cfg);
    if (defs.size() != params.tensors.size())
        throw CheckpointError("save_checkpoint: params do not match config layout");

    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < defs.size(); ++i) {
        tensors.push_back({{"name", defs[i].name},
                           {"rows", params.tensors[i].rows},
                           {"cols", params.tensors[i].cols},
                           {"offset", offset}});
        offset += params.tensors[i].size();
    }
    const std::string manifest =
        nlohmann::json{{"format_version", 1},
                       {"config", config_to_json(cfg)},
                       {"tensors", std::move(tensors)}}
            .dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("save_checkpoint: cannot open " + path);
    out.write(kCkptMagic, sizeof(kCkptMagic));
    const std::uint64_t len = manifest.size();
    char lenbuf[8];
    for (int b = 0; b < 8; ++b) lenbuf[b] = static_cast<char>((len >> (8 * b)) & 0xff);
    out.write(lenbuf, 8);
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    for (const auto& t : params.tensors)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!out) throw CheckpointError("save_checkpoint: write failed for " + path);
}

inline std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path) {
    static_assert(sizeof(double) == 8);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("load_checkpoint: cannot open " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw CheckpointError("load_checkpoint: bad magic / version mismatch");
    char lenbuf[8];
    if (!in.read(lenbuf, 8)) throw CheckpointError("load_checkpoint: truncated header");
    std::uint64_t len = 0;
    for (int b = 0; b < 8; ++b)
        len |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenbuf[b])) << (8 * b);
    std::string manifest(len, '\0');
    if (!in.read(manifest.data(), static_cast<std::streamsize>(len)))
        throw CheckpointError("load_checkpoint: truncated manifest");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(manifest);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("load_checkpoint: bad manifest: ") + e.what());
    }
    if (j.value("format_version", -1) != 1)
        throw CheckpointError("load_checkpoint: unsupported format version");

    const ModelConfig cfg = config_from_json(j.at("config"));
    const auto defs = ModelParams::layout(cfg);
    const auto& table = j.at("tensors");
    if (table.size() != defs.size())
        throw CheckpointError("load_checkpoint: tensor table does not match config layout");

    ModelParams params;
    params.tensors.reserve(defs.size());
    std::uint64_t expect_offset = 0;
    for (std::size_t i = 0; i < defs.size(); ++i) {
        const auto& e = table.at(i);
        if (e.at("name").get<std::string>() != defs[i].name ||
            e.at("rows").get<int>() != defs[i].rows || e.at("cols").get<int>() != defs[i].cols)
            throw CheckpointError("load_checkpoint: shape mismatch for " + defs[i].name);
        if (e.at("offset").get<std::uint64_t>() != expect_offset)
            throw CheckpointError("load_checkpoint: bad offset for " + defs[i].name);
        expect_offset += static_cast<std::uint64_t>(defs[i].rows) * defs[i].cols;
        params.tensors.emplace_back(defs[i].rows, defs[i].cols, 0.0);
    }
    for (auto& t : params.tensors) {
        if (!in.read(reinterpret_cast<char*>(t.data.data()),
                     static_cast<std::streamsize>(t.size() * sizeof(double))))
            throw CheckpointError("load_checkpoint: truncated tensor data");
    }
    char extra;
    if (in.read(&extra, 1)) throw CheckpointError("load_checkpoint: trailing bytes");
    return {std::move(params), cfg};
}

} // namespace fairdiv
