#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fairdiv::ad {

// Dense row-major matrix of 64-bit reals. Rank-2 is all the model needs;
// the entry grid of an instance is handled as an (m*n)-row matrix with
// constant pooling operators.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
    Tensor(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != static_cast<std::size_t>(r) * c)
            throw std::invalid_argument("Tensor: data size mismatch");
    }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

inline void debug_check_finite(const Tensor& t) {
#ifndef NDEBUG
    for (double x : t.data) assert(std::isfinite(x) && "non-finite value in forward pass");
#else
    (void)t;
#endif
}

enum class Op {
    input,
    add,
    sub,
    mul,
    scale,
    matmul,
    transpose,
    row_mean,
    col_mean,
    row_max,
    col_max,
    row_min,
    col_min,
    row_sum,
    col_sum,
    sum_all,
    broadcast_row,
    broadcast_col,
    concat_cols,
    log,
    silu,
    softmax_rows,
    rmsnorm_rows,
};

// Append-only record of the forward computation. Nodes are created in
// topological order; backward() walks them once in reverse. Every loop below
// runs in a fixed index order, so forward and backward are bit-reproducible.
class Tape {
public:
    using NodeId = int;

    struct Node {
        Op op;
        std::vector<NodeId> inputs;
        Tensor value;
        double aux = 0.0;          // scale factor or softmax temperature
        std::vector<int> arg;      // max/min winners, concat widths
        bool needs_grad = false;
    };

    NodeId input(Tensor v, bool requires_grad = false) {
        Node n;
        n.op = Op::input;
        n.value = std::move(v);
        n.needs_grad = requires_grad;
        return push(std::move(n));
    }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    std::size_t node_count() const { return nodes_.size(); }

    NodeId add(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require(A.same_shape(B), "add: shape mismatch");
        Tensor out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = A.data[i] + B.data[i];
        return push_op(Op::add, {a, b}, std::move(out));
    }

    NodeId sub(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require(A.same_shape(B), "sub: shape mismatch");
        Tensor out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = A.data[i] - B.data[i];
        return push_op(Op::sub, {a, b}, std::move(out));
    }

    NodeId mul(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require(A.same_shape(B), "mul: shape mismatch");
        Tensor out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = A.data[i] * B.data[i];
        return push_op(Op::mul, {a, b}, std::move(out));
    }

    NodeId scale(NodeId a, double c) {
        const Tensor& A = val(a);
        Tensor out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = c * A.data[i];
        NodeId id = push_op(Op::scale, {a}, std::move(out));
        nodes_[id].aux = c;
        return id;
    }

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require(A.cols == B.rows, "matmul: inner dimension mismatch");
        Tensor out(A.rows, B.cols, 0.0);
        for (int i = 0; i < A.rows; ++i)
            for (int l = 0; l < A.cols; ++l) {
                const double av = A.at(i, l);
                if (av == 0.0) continue;
                const double* brow = &B.data[static_cast<std::size_t>(l) * B.cols];
                double* orow = &out.data[static_cast<std::size_t>(i) * out.cols];
                for (int j = 0; j < B.cols; ++j) orow[j] += av * brow[j];
            }
        return push_op(Op::matmul, {a, b}, std::move(out));
    }

    NodeId transpose(NodeId a) {
        const Tensor& A = val(a);
        Tensor out(A.cols, A.rows);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < A.cols; ++j) out.at(j, i) = A.at(i, j);
        return push_op(Op::transpose, {a}, std::move(out));
    }

    NodeId row_mean(NodeId a) { return reduce_rows(a, Op::row_mean); }
    NodeId row_sum(NodeId a) { return reduce_rows(a, Op::row_sum); }
    NodeId col_mean(NodeId a) { return reduce_cols(a, Op::col_mean); }
    NodeId col_sum(NodeId a) { return reduce_cols(a, Op::col_sum); }

    NodeId row_max(NodeId a) { return extremum_rows(a, Op::row_max); }
    NodeId row_min(NodeId a) { return extremum_rows(a, Op::row_min); }
    NodeId col_max(NodeId a) { return extremum_cols(a, Op::col_max); }
    NodeId col_min(NodeId a) { return extremum_cols(a, Op::col_min); }

    NodeId sum_all(NodeId a) {
        const Tensor& A = val(a);
        double s = 0.0;
        for (double x : A.data) s += x;
        Tensor out(1, 1);
        out.data[0] = s;
        return push_op(Op::sum_all, {a}, std::move(out));
    }

    NodeId broadcast_row(NodeId a, int rows) {
        const Tensor& A = val(a);
        require(A.rows == 1, "broadcast_row: input must be 1 x c");
        Tensor out(rows, A.cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < A.cols; ++j) out.at(i, j) = A.at(0, j);
        return push_op(Op::broadcast_row, {a}, std::move(out));
    }

    NodeId broadcast_col(NodeId a, int cols) {
        const Tensor& A = val(a);
        require(A.cols == 1, "broadcast_col: input must be r x 1");
        Tensor out(A.rows, cols);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < cols; ++j) out.at(i, j) = A.at(i, 0);
        return push_op(Op::broadcast_col, {a}, std::move(out));
    }

    NodeId concat_cols(const std::vector<NodeId>& parts) {
        require(!parts.empty(), "concat_cols: empty input list");
        const int rows = val(parts[0]).rows;
        int cols = 0;
        for (NodeId p : parts) {
            require(val(p).rows == rows, "concat_cols: row mismatch");
            cols += val(p).cols;
        }
        Tensor out(rows, cols);
        int off = 0;
        std::vector<int> widths;
        for (NodeId p : parts) {
            const Tensor& P = val(p);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < P.cols; ++j) out.at(i, off + j) = P.at(i, j);
            widths.push_back(P.cols);
            off += P.cols;
        }
        NodeId id = push_op(Op::concat_cols, parts, std::move(out));
        nodes_[id].arg = std::move(widths);
        return id;
    }

    // Natural log; callers shift by an epsilon wherever zero is reachable.
    NodeId log(NodeId a) {
        const Tensor& A = val(a);
        Tensor out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.size(); ++i) {
            assert(A.data[i] > 0.0 && "log of nonpositive input");
            out.data[i] = std::log(A.data[i]);
        }
        return push_op(Op::log, {a}, std::move(out));
    }

    NodeId silu(NodeId a) {
        const Tensor& A = val(a);
        Tensor out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double x = A.data[i];
            out.data[i] = x / (1.0 + std::exp(-x));
        }
        return push_op(Op::silu, {a}, std::move(out));
    }

    // Row-wise softmax of (x / tau) with row-max subtraction; rows sum to 1
    // and are invariant to shifting a row's logits by a constant.
    NodeId softmax_rows(NodeId a, double tau) {
        require(tau > 0.0, "softmax_rows: tau must be positive");
        const Tensor& A = val(a);
        Tensor out(A.rows, A.cols);
        for (int i = 0; i < A.rows; ++i) {
            double mx = A.at(i, 0);
            for (int j = 1; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
            double z = 0.0;
            for (int j = 0; j < A.cols; ++j) {
                const double e = std::exp((A.at(i, j) - mx) / tau);
                out.at(i, j) = e;
                z += e;
            }
            for (int j = 0; j < A.cols; ++j) out.at(i, j) /= z;
        }
        NodeId id = push_op(Op::softmax_rows, {a}, std::move(out));
        nodes_[id].aux = tau;
        return id;
    }

    // y_ij = gain_j * x_ij / rms(x_i), rms over each row.
    NodeId rmsnorm_rows(NodeId a, NodeId gain) {
        const Tensor& A = val(a);
        const Tensor& G = val(gain);
        require(G.rows == 1 && G.cols == A.cols, "rmsnorm_rows: gain must be 1 x cols");
        Tensor out(A.rows, A.cols);
        for (int i = 0; i < A.rows; ++i) {
            double ss = 0.0;
            for (int j = 0; j < A.cols; ++j) ss += A.at(i, j) * A.at(i, j);
            const double r = std::sqrt(ss / A.cols + kRmsEps);
            for (int j = 0; j < A.cols; ++j) out.at(i, j) = G.at(0, j) * A.at(i, j) / r;
        }
        return push_op(Op::rmsnorm_rows, {a, gain}, std::move(out));
    }

    // x (r x in) * w (in x out) + bias (1 x out). Composite; the pieces
    // carry the gradients.
    NodeId linear(NodeId x, NodeId w, NodeId b) {
        NodeId y = matmul(x, w);
        return add(y, broadcast_row(b, val(y).rows));
    }

    // Adjoints for every node reachable from `loss`, which must be 1x1.
    // Returns a vector aligned with node ids; untouched nodes carry an empty
    // tensor.
    std::vector<Tensor> backward(NodeId loss) {
        require(val(loss).rows == 1 && val(loss).cols == 1, "backward: loss must be scalar");
        std::vector<Tensor> grad(nodes_.size());
        grad[loss] = Tensor(1, 1, 1.0);
        for (int id = loss; id >= 0; --id) {
            if (grad[id].data.empty()) continue;
            accumulate_vjp(id, grad);
        }
        return grad;
    }

private:
    static constexpr double kRmsEps = 1e-12;

    std::vector<Node> nodes_;

    const Tensor& val(NodeId id) const { return nodes_[id].value; }

    static void require(bool cond, const char* msg) {
        if (!cond) throw std::invalid_argument(msg);
    }

    NodeId push(Node n) {
        debug_check_finite(n.value);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    NodeId push_op(Op op, std::vector<NodeId> inputs, Tensor out) {
        Node n;
        n.op = op;
        n.needs_grad = false;
        for (NodeId i : inputs) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
        n.inputs = std::move(inputs);
        n.value = std::move(out);
        return push(std::move(n));
    }

    NodeId reduce_rows(NodeId a, Op op) {
        const Tensor& A = val(a);
        Tensor out(A.rows, 1);
        for (int i = 0; i < A.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < A.cols; ++j) s += A.at(i, j);
            out.at(i, 0) = op == Op::row_mean ? s / A.cols : s;
        }
        return push_op(op, {a}, std::move(out));
    }

    NodeId reduce_cols(NodeId a, Op op) {
        const Tensor& A = val(a);
        Tensor out(1, A.cols, 0.0);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < A.cols; ++j) out.at(0, j) += A.at(i, j);
        if (op == Op::col_mean)
            for (int j = 0; j < A.cols; ++j) out.at(0, j) /= A.rows;
        return push_op(op, {a}, std::move(out));
    }

    // Gradient flows to the first attaining index (lexicographic
    // subgradient); ties are measure-zero under continuous inputs.
    NodeId extremum_rows(NodeId a, Op op) {
        const Tensor& A = val(a);
        Tensor out(A.rows, 1);
        std::vector<int> arg(A.rows);
        const bool want_max = op == Op::row_max;
        for (int i = 0; i < A.rows; ++i) {
            int best = 0;
            for (int j = 1; j < A.cols; ++j) {
                const bool better = want_max ? A.at(i, j) > A.at(i, best) : A.at(i, j) < A.at(i, best);
                if (better) best = j;
            }
            out.at(i, 0) = A.at(i, best);
            arg[i] = best;
        }
        NodeId id = push_op(op, {a}, std::move(out));
        nodes_[id].arg = std::move(arg);
        return id;
    }

    NodeId extremum_cols(NodeId a, Op op) {
        const Tensor& A = val(a);
        Tensor out(1, A.cols);
        std::vector<int> arg(A.cols);
        const bool want_max = op == Op::col_max;
        for (int j = 0; j < A.cols; ++j) {
            int best = 0;
            for (int i = 1; i < A.rows; ++i) {
                const bool better = want_max ? A.at(i, j) > A.at(best, j) : A.at(i, j) < A.at(best, j);
                if (better) best = i;
            }
            out.at(0, j) = A.at(best, j);
            arg[j] = best;
        }
        NodeId id = push_op(op, {a}, std::move(out));
        nodes_[id].arg = std::move(arg);
        return id;
    }

    Tensor& grad_slot(std::vector<Tensor>& grad, NodeId id) {
        if (grad[id].data.empty()) grad[id] = Tensor(val(id).rows, val(id).cols, 0.0);
        return grad[id];
    }

    void accumulate_vjp(NodeId id, std::vector<Tensor>& grad) {
        const Node& n = nodes_[id];
        const Tensor& g = grad[id];
        auto want = [&](int slot) { return nodes_[n.inputs[slot]].needs_grad; };

        switch (n.op) {
            case Op::input:
                break;
            case Op::add: {
                for (int s = 0; s < 2; ++s) {
                    if (!want(s)) continue;
                    Tensor& gi = grad_slot(grad, n.inputs[s]);
                    for (std::size_t i = 0; i < g.size(); ++i) gi.data[i] += g.data[i];
                }
                break;
            }
            case Op::sub: {
                if (want(0)) {
                    Tensor& ga = grad_slot(grad, n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                }
                if (want(1)) {
                    Tensor& gb = grad_slot(grad, n.inputs[1]);
                    for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
                }
                break;
            }
            case Op::mul: {
                const Tensor& A = val(n.inputs[0]);
                const Tensor& B = val(n.inputs[1]);
                if (want(0)) {
                    Tensor& ga = grad_slot(grad, n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * B.data[i];
                }
                if (want(1)) {
                    Tensor& gb = grad_slot(grad, n.inputs[1]);
                    for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * A.data[i];
                }
                break;
            }
            case Op::scale: {
                if (!want(0)) break;
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += n.aux * g.data[i];
                break;
            }
            case Op::matmul: {
                const Tensor& A = val(n.inputs[0]);
                const Tensor& B = val(n.inputs[1]);
                if (want(0)) { // dA = g * B^T
                    Tensor& ga = grad_slot(grad, n.inputs[0]);
                    for (int i = 0; i < A.rows; ++i)
                        for (int l = 0; l < A.cols; ++l) {
                            double s = 0.0;
                            for (int j = 0; j < B.cols; ++j) s += g.at(i, j) * B.at(l, j);
                            ga.at(i, l) += s;
                        }
                }
                if (want(1)) { // dB = A^T * g
                    Tensor& gb = grad_slot(grad, n.inputs[1]);
                    for (int l = 0; l < A.cols; ++l)
                        for (int j = 0; j < B.cols; ++j) {
                            double s = 0.0;
                            for (int i = 0; i < A.rows; ++i) s += A.at(i, l) * g.at(i, j);
                            gb.at(l, j) += s;
                        }
                }
                break;
            }
            case Op::transpose: {
                if (!want(0)) break;
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) ga.at(j, i) += g.at(i, j);
                break;
            }
            case Op::row_mean:
            case Op::row_sum: {
                if (!want(0)) break;
                const Tensor& A = val(n.inputs[0]);
                const double w = n.op == Op::row_mean ? 1.0 / A.cols : 1.0;
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (int i = 0; i < A.rows; ++i)
                    for (int j = 0; j < A.cols; ++j) ga.at(i, j) += w * g.at(i, 0);
                break;
            }
            case Op::col_mean:
            case Op::col_sum: {
                if (!want(0)) break;
                const Tensor& A = val(n.inputs[0]);
                const double w = n.op == Op::col_mean ? 1.0 / A.rows : 1.0;
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (int i = 0; i < A.rows; ++i)
                    for (int j = 0; j < A.cols; ++j) ga.at(i, j) += w * g.at(0, j);
                break;
            }
            case Op::row_max:
            case Op::row_min: {
                if (!want(0)) break;
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (int i = 0; i < val(id).rows; ++i) ga.at(i, n.arg[i]) += g.at(i, 0);
                break;
            }
            case Op::col_max:
            case Op::col_min: {
                if (!want(0)) break;
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (int j = 0; j < val(id).cols; ++j) ga.at(n.arg[j], j) += g.at(0, j);
                break;
            }
            case Op::sum_all: {
                if (!want(0)) break;
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[0];
                break;
            }
            case Op::broadcast_row: {
                if (!want(0)) break;
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) ga.at(0, j) += g.at(i, j);
                break;
            }
            case Op::broadcast_col: {
                if (!want(0)) break;
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) ga.at(i, 0) += g.at(i, j);
                break;
            }
            case Op::concat_cols: {
                int off = 0;
                for (std::size_t s = 0; s < n.inputs.size(); ++s) {
                    const int w = n.arg[s];
                    if (nodes_[n.inputs[s]].needs_grad) {
                        Tensor& gi = grad_slot(grad, n.inputs[s]);
                        for (int i = 0; i < g.rows; ++i)
                            for (int j = 0; j < w; ++j) gi.at(i, j) += g.at(i, off + j);
                    }
                    off += w;
                }
                break;
            }
            case Op::log: {
                if (!want(0)) break;
                const Tensor& A = val(n.inputs[0]);
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] / A.data[i];
                break;
            }
            case Op::silu: {
                if (!want(0)) break;
                const Tensor& A = val(n.inputs[0]);
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double x = A.data[i];
                    const double sig = 1.0 / (1.0 + std::exp(-x));
                    ga.data[i] += g.data[i] * sig * (1.0 + x * (1.0 - sig));
                }
                break;
            }
            case Op::softmax_rows: {
                if (!want(0)) break;
                const Tensor& Y = val(id);
                Tensor& ga = grad_slot(grad, n.inputs[0]);
                for (int i = 0; i < Y.rows; ++i) {
                    double dot = 0.0;
                    for (int j = 0; j < Y.cols; ++j) dot += g.at(i, j) * Y.at(i, j);
                    for (int j = 0; j < Y.cols; ++j)
                        ga.at(i, j) += Y.at(i, j) * (g.at(i, j) - dot) / n.aux;
                }
                break;
            }
            case Op::rmsnorm_rows: {
                const Tensor& A = val(n.inputs[0]);
                const Tensor& G = val(n.inputs[1]);
                const int c = A.cols;
                for (int i = 0; i < A.rows; ++i) {
                    double ss = 0.0;
                    for (int j = 0; j < c; ++j) ss += A.at(i, j) * A.at(i, j);
                    const double r = std::sqrt(ss / c + kRmsEps);
                    if (want(1)) {
                        Tensor& gg = grad_slot(grad, n.inputs[1]);
                        for (int j = 0; j < c; ++j) gg.at(0, j) += g.at(i, j) * A.at(i, j) / r;
                    }
                    if (want(0)) {
                        Tensor& ga = grad_slot(grad, n.inputs[0]);
                        double dot = 0.0;
                        for (int j = 0; j < c; ++j) dot += g.at(i, j) * G.at(0, j) * A.at(i, j);
                        const double coef = dot / (c * r * r * r);
                        for (int j = 0; j < c; ++j)
                            ga.at(i, j) += g.at(i, j) * G.at(0, j) / r - coef * A.at(i, j);
                    }
                }
                break;
            }
        }
    }
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    std::size_t coords = 0;
};

// Central-difference check of an analytic gradient. f maps a flat parameter
// vector to a scalar. Relative error uses max(|analytic|, |numeric|, 1) as
// denominator so near-zero coordinates do not drown the report in
// finite-difference noise.
template <typename F>
GradCheckReport grad_check(F&& f, std::vector<double> x, const std::vector<double>& analytic,
                           double h = 1e-6) {
    if (x.size() != analytic.size())
        throw std::invalid_argument("grad_check: gradient size mismatch");
    GradCheckReport rep;
    rep.coords = x.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = f(x);
        x[i] = saved - h;
        const double fm = f(x);
        x[i] = saved;
        const double num = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::abs(num), std::abs(analytic[i]), 1.0});
        const double rel = std::abs(num - analytic[i]) / denom;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_index = i;
        }
    }
    return rep;
}

} // namespace fairdiv::ad
