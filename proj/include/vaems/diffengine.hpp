#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// Every value on the tape is a 2-D matrix; scalars are 1x1. Nodes are appended
// in evaluation order, so the tape is topologically sorted by construction and
// backward() is a single reverse sweep.

#include "vaems/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace vaems::ad {

using NodeId = std::size_t;

enum class Op {
    Parameter,
    Constant,
    Affine,
    MatMul,
    BatchNorm,
    Relu,
    Softplus,
    Exp,
    Log,
    RowNormalize,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    Sum,
    PoissonSample,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Parameter: return "parameter";
        case Op::Constant: return "constant";
        case Op::Affine: return "affine";
        case Op::MatMul: return "matmul";
        case Op::BatchNorm: return "batch_norm";
        case Op::Relu: return "relu";
        case Op::Softplus: return "softplus";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::RowNormalize: return "row_normalize";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::Scale: return "scale";
        case Op::Sum: return "sum";
        case Op::PoissonSample: return "poisson_sample";
    }
    return "?";
}

/// A named trainable array with a gradient accumulator of the same shape.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Running statistics for one batch-normalization layer.
struct BatchNormState {
    RowVector running_mean;
    RowVector running_var;
    double momentum = 0.9;  // weight kept on the old running value
    double eps = 1e-5;

    explicit BatchNormState(Eigen::Index features = 0)
        : running_mean(RowVector::Zero(features)), running_var(RowVector::Ones(features)) {}
};

enum class SampleMode {
    StraightThrough,  // forward: exact Poisson count; backward: relaxed derivative
    Relaxed,          // forward: relaxed count itself (smooth in the rates, for gradient checks)
};

struct PoissonSampleOptions {
    std::uint64_t seed = 0;
    double tau = 0.1;
    long series_cap = 50;
    SampleMode mode = SampleMode::StraightThrough;
    // Arrivals are generated until (T - 1) / tau exceeds this; beyond it the
    // sigmoid terms are below 1e-5 of their peak.
    double window = 12.0;
};

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Effective truncation cap for a batch of rates: max(configured, ceil(lmax + 10 sqrt(lmax))).
inline long effective_series_cap(double lambda_max, long configured) {
    const long c = static_cast<long>(std::ceil(lambda_max + 10.0 * std::sqrt(std::max(lambda_max, 0.0))));
    return std::max(configured, c);
}

/// Result of one Poisson-process draw for a single rate.
struct PoissonDraw {
    double count = 0;       // exact count of arrivals in [0, 1], truncated at the cap
    double relaxed = 0;     // sum of sigmoid((1 - T_i) / tau)
    double d_relaxed = 0;   // derivative of `relaxed` with respect to the rate
    bool truncated = false;
};

/// Counts arrivals in [0, 1] of a rate-`lambda` Poisson process built from
/// exponential waiting times E_i / lambda, and the sigmoid-relaxed count.
inline PoissonDraw draw_poisson_process(double lambda, Rng& rng, double tau, long cap, double window,
                                        bool need_relaxed) {
    std::exponential_distribution<double> expo(1.0);
    PoissonDraw d;
    double cumulative = 0.0;
    long arrivals_in_unit = 0;
    const double stop = need_relaxed ? 1.0 + window * tau : 1.0;
    while (true) {
        cumulative += expo(rng);
        const double t = cumulative / lambda;
        if (t > stop) break;
        if (t <= 1.0) ++arrivals_in_unit;
        if (need_relaxed) {
            const double s = sigmoid((1.0 - t) / tau);
            d.relaxed += s;
            d.d_relaxed += s * (1.0 - s) / tau * t / lambda;
        } else if (arrivals_in_unit > cap) {
            break;
        }
    }
    if (arrivals_in_unit > cap) {
        d.truncated = true;
        arrivals_in_unit = cap;
    }
    d.count = static_cast<double>(arrivals_in_unit);
    return d;
}

class Tape {
public:
    NodeId constant(Matrix v) {
        Node n;
        n.op = Op::Constant;
        n.value = std::move(v);
        return push(std::move(n));
    }

    NodeId param(Parameter& p) {
        Node n;
        n.op = Op::Parameter;
        n.value = p.value;
        n.param = &p;
        return push(std::move(n));
    }

    /// x (B x I) * w (I x O) + b (1 x O), bias broadcast over rows.
    NodeId affine(NodeId x, NodeId w, NodeId b) {
        const Matrix& xv = value(x);
        const Matrix& wv = value(w);
        const Matrix& bv = value(b);
        if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols())
            throw ShapeError(std::string("affine: x ") + shape_str(xv) + ", w " + shape_str(wv) + ", b " +
                             shape_str(bv));
        Node n;
        n.op = Op::Affine;
        n.in = {x, w, b};
        n.value = xv * wv;
        n.value.rowwise() += bv.row(0);
        return push(std::move(n));
    }

    NodeId matmul(NodeId a, NodeId b) {
        const Matrix& av = value(a);
        const Matrix& bv = value(b);
        if (av.cols() != bv.rows())
            throw ShapeError(std::string("matmul: ") + shape_str(av) + " * " + shape_str(bv));
        Node n;
        n.op = Op::MatMul;
        n.in = {a, b};
        n.value = av * bv;
        return push(std::move(n));
    }

    /// Per-column batch normalization. In training mode batch statistics are
    /// used (and, if `update_running`, folded into `state`); otherwise the
    /// running statistics are used.
    NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormState& state, bool training,
                      bool update_running = true) {
        const Matrix& xv = value(x);
        const Matrix& g = value(gamma);
        const Matrix& bt = value(beta);
        const auto f = xv.cols();
        if (g.rows() != 1 || g.cols() != f || bt.rows() != 1 || bt.cols() != f || state.running_mean.size() != f)
            throw ShapeError(std::string("batch_norm: x ") + shape_str(xv) + ", gamma " + shape_str(g) +
                             ", beta " + shape_str(bt) + ", state " + std::to_string(state.running_mean.size()));
        if (training && xv.rows() < 2)
            throw ShapeError("batch_norm: training mode needs at least 2 rows, got " + std::to_string(xv.rows()));
        Node n;
        n.op = Op::BatchNorm;
        n.in = {x, gamma, beta};
        n.flag = training;
        RowVector mean;
        RowVector var;
        if (training) {
            mean = xv.colwise().mean();
            var = (xv.rowwise() - mean).array().square().colwise().mean().matrix();
            if (update_running) {
                const double b = static_cast<double>(xv.rows());
                state.running_mean = state.momentum * state.running_mean + (1.0 - state.momentum) * mean;
                state.running_var =
                    state.momentum * state.running_var + (1.0 - state.momentum) * var * (b / (b - 1.0));
            }
        } else {
            mean = state.running_mean;
            var = state.running_var;
        }
        n.aux_row = (var.array() + state.eps).rsqrt().matrix();  // inverse std
        n.aux = (xv.rowwise() - mean).array().rowwise() * n.aux_row.array();  // xhat
        n.value = n.aux.array().rowwise() * g.row(0).array();
        n.value.rowwise() += bt.row(0);
        return push(std::move(n));
    }

    NodeId relu(NodeId x) { return unary(Op::Relu, x, [](double v) { return v > 0 ? v : 0.0; }); }
    NodeId softplus(NodeId x) { return unary(Op::Softplus, x, [](double v) { return ad::softplus(v); }); }
    NodeId exp(NodeId x) { return unary(Op::Exp, x, [](double v) { return std::exp(v); }); }

    NodeId log(NodeId x) {
        const Matrix& xv = value(x);
        if ((xv.array() <= 0.0).any()) throw DomainError("log: non-positive input");
        return unary(Op::Log, x, [](double v) { return std::log(v); });
    }

    /// Divides each row by max(row sum, eps).
    NodeId row_normalize(NodeId x, double eps = 1e-12) {
        const Matrix& xv = value(x);
        Node n;
        n.op = Op::RowNormalize;
        n.in = {x};
        n.scalar = eps;
        n.aux_row = xv.rowwise().sum().transpose().cwiseMax(eps);  // per-row denominator
        n.value = xv.array().colwise() / n.aux_row.transpose().array();
        return push(std::move(n));
    }

    NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }
    NodeId div(NodeId a, NodeId b) { return binary(Op::Div, a, b); }

    NodeId scale(NodeId x, double c) {
        Node n;
        n.op = Op::Scale;
        n.in = {x};
        n.scalar = c;
        n.value = value(x) * c;
        return push(std::move(n));
    }

    /// Sum of all entries, as a 1x1 node.
    NodeId sum(NodeId x) {
        Node n;
        n.op = Op::Sum;
        n.in = {x};
        n.value = Matrix::Constant(1, 1, value(x).sum());
        return push(std::move(n));
    }

    /// Poisson draw per entry of `rates` via exponential waiting times; each
    /// entry uses its own RNG stream derived from `opts.seed` and its index.
    NodeId poisson_sample(NodeId rates, const PoissonSampleOptions& opts) {
        const Matrix& lv = value(rates);
        if (!(lv.array() > 0.0).all()) throw DomainError("poisson_sample: rates must be > 0");
        if (opts.tau <= 0) throw DomainError("poisson_sample: tau must be > 0");
        if (opts.series_cap < 1) throw DomainError("poisson_sample: series cap must be >= 1");
        const long cap = effective_series_cap(lv.maxCoeff(), opts.series_cap);
        // A relaxed forward value must not jump when an arrival leaves the window.
        const double window = opts.mode == SampleMode::Relaxed ? std::max(opts.window, 40.0) : opts.window;
        Node n;
        n.op = Op::PoissonSample;
        n.in = {rates};
        n.value.resize(lv.rows(), lv.cols());
        n.aux.resize(lv.rows(), lv.cols());
        for (Eigen::Index i = 0; i < lv.size(); ++i) {
            Rng rng(mix_seed(opts.seed, static_cast<std::uint64_t>(i)));
            const PoissonDraw d = draw_poisson_process(lv.data()[i], rng, opts.tau, cap, window, true);
            n.value.data()[i] = opts.mode == SampleMode::Relaxed ? d.relaxed : d.count;
            n.aux.data()[i] = d.d_relaxed;
            if (d.truncated) ++truncations_;
        }
        draws_ += lv.size();
        return push(std::move(n));
    }

    const Matrix& value(NodeId id) const {
        check_id(id);
        return nodes_[id].value;
    }
    double scalar(NodeId id) const { return value(id)(0, 0); }

    /// Adjoint of a node after backward(); empty if the node is unreachable from the loss.
    const Matrix& adjoint(NodeId id) const {
        check_id(id);
        return nodes_[id].adj;
    }

    Op op(NodeId id) const {
        check_id(id);
        return nodes_[id].op;
    }

    std::size_t size() const { return nodes_.size(); }
    const std::vector<NodeId>& inputs(NodeId id) const {
        check_id(id);
        return nodes_[id].in;
    }

    long truncations() const { return truncations_; }
    long draws() const { return draws_; }

    /// Accumulates d(loss)/d(parameter) into every Parameter reachable from `loss`.
    void backward(NodeId loss) {
        check_id(loss);
        if (nodes_[loss].value.size() != 1)
            throw ShapeError("backward: loss must be scalar, got " + shape_str(nodes_[loss].value));
        for (auto& n : nodes_) n.adj.resize(0, 0);
        nodes_[loss].adj = Matrix::Ones(1, 1);
        for (NodeId id = loss + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (n.adj.size() == 0) continue;
            propagate(n);
        }
    }

private:
    struct Node {
        Op op = Op::Constant;
        std::vector<NodeId> in;
        Matrix value;
        Matrix adj;
        Matrix aux;
        RowVector aux_row;
        double scalar = 0.0;
        bool flag = false;
        Parameter* param = nullptr;
    };

    std::vector<Node> nodes_;
    long truncations_ = 0;
    long draws_ = 0;

    void check_id(NodeId id) const {
        if (id >= nodes_.size()) throw ShapeError("tape: unknown node id " + std::to_string(id));
    }

    NodeId push(Node n) {
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    template <class F>
    NodeId unary(Op op, NodeId x, F f) {
        Node n;
        n.op = op;
        n.in = {x};
        n.value = value(x).unaryExpr(f);
        return push(std::move(n));
    }

    NodeId binary(Op op, NodeId a, NodeId b) {
        const Matrix& av = value(a);
        const Matrix& bv = value(b);
        if (av.rows() != bv.rows() || av.cols() != bv.cols())
            throw ShapeError(std::string(op_name(op)) + ": " + shape_str(av) + " vs " + shape_str(bv));
        Node n;
        n.op = op;
        n.in = {a, b};
        switch (op) {
            case Op::Add: n.value = av + bv; break;
            case Op::Sub: n.value = av - bv; break;
            case Op::Mul: n.value = av.cwiseProduct(bv); break;
            case Op::Div: n.value = av.cwiseQuotient(bv); break;
            default: throw ShapeError("binary: unsupported op");
        }
        return push(std::move(n));
    }

    void accumulate(NodeId id, const Matrix& g) {
        Node& t = nodes_[id];
        if (t.adj.size() == 0)
            t.adj = g;
        else
            t.adj += g;
    }

    void propagate(Node& n) {
        const Matrix& g = n.adj;
        switch (n.op) {
            case Op::Parameter:
                n.param->grad += g;
                break;
            case Op::Constant:
                break;
            case Op::Affine: {
                const Matrix& x = nodes_[n.in[0]].value;
                const Matrix& w = nodes_[n.in[1]].value;
                accumulate(n.in[0], g * w.transpose());
                accumulate(n.in[1], x.transpose() * g);
                accumulate(n.in[2], g.colwise().sum());
                break;
            }
            case Op::MatMul: {
                const Matrix& a = nodes_[n.in[0]].value;
                const Matrix& b = nodes_[n.in[1]].value;
                accumulate(n.in[0], g * b.transpose());
                accumulate(n.in[1], a.transpose() * g);
                break;
            }
            case Op::BatchNorm: {
                const Matrix& gamma = nodes_[n.in[1]].value;
                const Matrix& xhat = n.aux;
                accumulate(n.in[1], g.cwiseProduct(xhat).colwise().sum());
                accumulate(n.in[2], g.colwise().sum());
                Matrix dxhat = g.array().rowwise() * gamma.row(0).array();
                if (n.flag) {
                    const double b = static_cast<double>(g.rows());
                    const RowVector s1 = dxhat.colwise().sum();
                    const RowVector s2 = dxhat.cwiseProduct(xhat).colwise().sum();
                    Matrix dx = (b * dxhat.array() - (xhat.array().rowwise() * s2.array())).matrix();
                    dx.rowwise() -= s1;
                    dx = (dx.array().rowwise() * (n.aux_row.array() / b)).matrix();
                    accumulate(n.in[0], dx);
                } else {
                    accumulate(n.in[0], (dxhat.array().rowwise() * n.aux_row.array()).matrix());
                }
                break;
            }
            case Op::Relu: {
                const Matrix& x = nodes_[n.in[0]].value;
                accumulate(n.in[0], (x.array() > 0.0).select(g, 0.0));
                break;
            }
            case Op::Softplus: {
                const Matrix& x = nodes_[n.in[0]].value;
                accumulate(n.in[0], g.cwiseProduct(x.unaryExpr([](double v) { return sigmoid(v); })));
                break;
            }
            case Op::Exp:
                accumulate(n.in[0], g.cwiseProduct(n.value));
                break;
            case Op::Log:
                accumulate(n.in[0], g.cwiseQuotient(nodes_[n.in[0]].value));
                break;
            case Op::RowNormalize: {
                const Matrix& x = nodes_[n.in[0]].value;
                Matrix dx(x.rows(), x.cols());
                for (Eigen::Index r = 0; r < x.rows(); ++r) {
                    const double s = n.aux_row(r);
                    if (x.row(r).sum() > n.scalar) {
                        const double dot = g.row(r).dot(x.row(r));
                        dx.row(r) = (g.row(r).array() / s - dot / (s * s)).matrix();
                    } else {
                        dx.row(r) = g.row(r) / s;
                    }
                }
                accumulate(n.in[0], dx);
                break;
            }
            case Op::Add:
                accumulate(n.in[0], g);
                accumulate(n.in[1], g);
                break;
            case Op::Sub:
                accumulate(n.in[0], g);
                accumulate(n.in[1], -g);
                break;
            case Op::Mul: {
                const Matrix& a = nodes_[n.in[0]].value;
                const Matrix& b = nodes_[n.in[1]].value;
                accumulate(n.in[0], g.cwiseProduct(b));
                accumulate(n.in[1], g.cwiseProduct(a));
                break;
            }
            case Op::Div: {
                const Matrix& a = nodes_[n.in[0]].value;
                const Matrix& b = nodes_[n.in[1]].value;
                accumulate(n.in[0], g.cwiseQuotient(b));
                accumulate(n.in[1], (-g.cwiseProduct(a).array() / b.array().square()).matrix());
                break;
            }
            case Op::Scale:
                accumulate(n.in[0], g * n.scalar);
                break;
            case Op::Sum: {
                const Matrix& x = nodes_[n.in[0]].value;
                accumulate(n.in[0], Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
                break;
            }
            case Op::PoissonSample:
                accumulate(n.in[0], g.cwiseProduct(n.aux));
                break;
        }
    }
};

/// Compares backward() gradients for `param` with central differences of the
/// scalar built by `build`. Returns the max over coordinates of
/// |analytic - numeric| / max(|analytic| + |numeric|, 1e-6 max(1, |loss|)).
inline double finite_difference_check(const std::function<NodeId(Tape&)>& build, Parameter& param, double step) {
    if (!(step > 0)) throw DomainError("finite_difference_check: step must be > 0");
    param.zero_grad();
    {
        Tape tape;
        const NodeId loss = build(tape);
        tape.backward(loss);
    }
    const Matrix analytic = param.grad;
    auto eval = [&] {
        Tape tape;
        const NodeId loss = build(tape);
        if (tape.value(loss).size() != 1) throw ShapeError("finite_difference_check: loss must be scalar");
        return tape.scalar(loss);
    };
    // entries below this are dominated by central-difference round-off
    const double floor = 1e-6 * std::max(1.0, std::abs(eval()));
    double worst = 0.0;
    for (Eigen::Index i = 0; i < param.value.size(); ++i) {
        const double orig = param.value.data()[i];
        param.value.data()[i] = orig + step;
        const double up = eval();
        param.value.data()[i] = orig - step;
        const double down = eval();
        param.value.data()[i] = orig;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic.data()[i];
        worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor));
    }
    param.zero_grad();
    return worst;
}

}  // namespace vaems::ad
