#include "lgvae/gradcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lgvae/errors.hpp"
#include "lgvae/kernels.hpp"

namespace lgvae {

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::input: return "input";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::matmul: return "matmul";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::tanh: return "tanh";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::softmax_t: return "softmax";
        case OpKind::square: return "square";
        case OpKind::reshape: return "reshape";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::frobenius_sq: return "frobenius_sq";
        case OpKind::relu: return "relu";
        case OpKind::scale: return "scale";
        case OpKind::add_row: return "add_row";
        case OpKind::sqrt: return "sqrt";
        case OpKind::softplus: return "softplus";
        case OpKind::log_softmax: return "log_softmax";
        case OpKind::clamp: return "clamp";
        case OpKind::batched_matmul: return "batched_matmul";
    }
    return "unknown";
}

namespace {

std::string shape_str(const DenseMatrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

template <class F>
DenseMatrix map(const DenseMatrix& a, F f) {
    DenseMatrix out(a.rows(), a.cols());
    auto src = a.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
    return out;
}

}  // namespace

void Graph::shape_error(const Node& node, const std::string& detail) const {
    const bool on_tape = !nodes_.empty() && &node >= nodes_.data() && &node < nodes_.data() + nodes_.size();
    const std::size_t id = on_tape ? static_cast<std::size_t>(&node - nodes_.data()) : nodes_.size();
    throw DimensionError(std::string("node ") + std::to_string(id) + " (" +
                         op_name(node.kind) + "): " + detail);
}

Var Graph::push(Node node) {
    node.needs_grad = node.trainable;
    for (std::size_t p : node.parents) node.needs_grad = node.needs_grad || nodes_[p].needs_grad;
    if (node.kind != OpKind::input) evaluate(node);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Graph::input(DenseMatrix value, std::string name, bool trainable) {
    Node n;
    n.kind = OpKind::input;
    n.value = std::move(value);
    n.name = std::move(name);
    n.trainable = trainable;
    Var v = push(std::move(n));
    input_ids_.push_back(v.id);
    return v;
}

// Shape validation happens in evaluate(), so re-running forward() on rebound
// inputs is checked the same way as construction.
#define LGVAE_UNARY(fn, op)                     \
    Var Graph::fn(Var a) {                      \
        Node n;                                 \
        n.kind = OpKind::op;                    \
        n.parents = {a.id};                     \
        return push(std::move(n));              \
    }
#define LGVAE_BINARY(fn, op)                    \
    Var Graph::fn(Var a, Var b) {               \
        Node n;                                 \
        n.kind = OpKind::op;                    \
        n.parents = {a.id, b.id};               \
        return push(std::move(n));              \
    }

LGVAE_BINARY(add, add)
LGVAE_BINARY(sub, sub)
LGVAE_BINARY(mul, mul)
LGVAE_BINARY(matmul, matmul)
LGVAE_BINARY(add_row, add_row)
LGVAE_UNARY(sum, sum)
LGVAE_UNARY(mean, mean)
LGVAE_UNARY(exp, exp)
LGVAE_UNARY(log, log)
LGVAE_UNARY(tanh, tanh)
LGVAE_UNARY(sigmoid, sigmoid)
LGVAE_UNARY(square, square)
LGVAE_UNARY(frobenius_sq, frobenius_sq)
LGVAE_UNARY(relu, relu)
LGVAE_UNARY(sqrt, sqrt)
LGVAE_UNARY(softplus, softplus)
LGVAE_UNARY(log_softmax, log_softmax)

#undef LGVAE_UNARY
#undef LGVAE_BINARY

Var Graph::softmax(Var a, double temperature) {
    if (!(temperature > 0.0)) throw InvalidInputError("softmax: temperature must be > 0");
    Node n;
    n.kind = OpKind::softmax_t;
    n.parents = {a.id};
    n.scalar = temperature;
    return push(std::move(n));
}

Var Graph::reshape(Var a, std::size_t rows, std::size_t cols) {
    Node n;
    n.kind = OpKind::reshape;
    n.parents = {a.id};
    n.r1 = rows;
    n.c1 = cols;
    return push(std::move(n));
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw InvalidInputError("concat_rows: no parts");
    Node n;
    n.kind = OpKind::concat;
    for (Var p : parts) n.parents.push_back(p.id);
    return push(std::move(n));
}

Var Graph::slice(Var a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
                 std::size_t col_end) {
    Node n;
    n.kind = OpKind::slice;
    n.parents = {a.id};
    n.r0 = row_begin;
    n.r1 = row_end;
    n.c0 = col_begin;
    n.c1 = col_end;
    return push(std::move(n));
}

Var Graph::slice_rows(Var a, std::size_t begin, std::size_t end) {
    return slice(a, begin, end, 0, value(a).cols());
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t end) {
    return slice(a, 0, value(a).rows(), begin, end);
}

Var Graph::scale(Var a, double s) {
    Node n;
    n.kind = OpKind::scale;
    n.parents = {a.id};
    n.scalar = s;
    return push(std::move(n));
}

Var Graph::clamp(Var a, double lo, double hi) {
    if (!(lo <= hi)) throw InvalidInputError("clamp: lo > hi");
    Node n;
    n.kind = OpKind::clamp;
    n.parents = {a.id};
    n.scalar = lo;
    n.scalar2 = hi;
    return push(std::move(n));
}

Var Graph::batched_matmul(Var a, Var b, std::size_t side) {
    Node n;
    n.kind = OpKind::batched_matmul;
    n.parents = {a.id, b.id};
    n.r0 = side;
    return push(std::move(n));
}

double Graph::scalar_value(Var v) const {
    const DenseMatrix& m = value(v);
    if (m.size() != 1) throw InvalidInputError("scalar_value: node is " + shape_str(m));
    return m[0];
}

const DenseMatrix& Graph::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.adjoint.size() != n.value.size())
        throw InvalidStateError("grad: no adjoint for node " + std::to_string(v.id));
    return n.adjoint;
}

void Graph::evaluate(Node& node) const {
    auto in = [&](std::size_t k) -> const DenseMatrix& { return nodes_[node.parents[k]].value; };

    switch (node.kind) {
        case OpKind::input:
            return;
        case OpKind::add:
        case OpKind::sub: {
            const DenseMatrix& a = in(0);
            const DenseMatrix& b = in(1);
            if (!a.same_shape(b)) shape_error(node, shape_str(a) + " vs " + shape_str(b));
            DenseMatrix out = a;
            if (node.kind == OpKind::add)
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
            else
                for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
            node.value = std::move(out);
            return;
        }
        case OpKind::mul: {
            const DenseMatrix& a = in(0);
            const DenseMatrix& b = in(1);
            if (a.same_shape(b)) {
                DenseMatrix out = a;
                for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
                node.value = std::move(out);
            } else if (a.size() == 1) {
                DenseMatrix out = b;
                for (double& v : out.data()) v *= a[0];
                node.value = std::move(out);
            } else if (b.size() == 1) {
                DenseMatrix out = a;
                for (double& v : out.data()) v *= b[0];
                node.value = std::move(out);
            } else {
                shape_error(node, shape_str(a) + " vs " + shape_str(b));
            }
            return;
        }
        case OpKind::matmul: {
            const DenseMatrix& a = in(0);
            const DenseMatrix& b = in(1);
            if (a.cols() != b.rows()) shape_error(node, shape_str(a) + " times " + shape_str(b));
            DenseMatrix out(a.rows(), b.cols());
            kernels::gemm_nn(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
            node.value = std::move(out);
            return;
        }
        case OpKind::batched_matmul: {
            const DenseMatrix& a = in(0);
            const DenseMatrix& b = in(1);
            const std::size_t side = node.r0;
            if (!a.same_shape(b) || a.cols() != side * side)
                shape_error(node, shape_str(a) + " vs " + shape_str(b) + " with side " +
                                      std::to_string(side));
            DenseMatrix out(a.rows(), a.cols());
            kernels::batched_square_gemm(a.data(), b.data(), out.data(), a.rows(), side);
            node.value = std::move(out);
            return;
        }
        case OpKind::add_row: {
            const DenseMatrix& a = in(0);
            const DenseMatrix& bias = in(1);
            if (bias.rows() != 1 || bias.cols() != a.cols())
                shape_error(node, shape_str(a) + " with bias " + shape_str(bias));
            DenseMatrix out = a;
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto row = out.row(r);
                for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
            }
            node.value = std::move(out);
            return;
        }
        case OpKind::sum:
        case OpKind::mean:
        case OpKind::frobenius_sq: {
            const DenseMatrix& a = in(0);
            double s = 0.0;
            if (node.kind == OpKind::frobenius_sq)
                for (double v : a.data()) s += v * v;
            else
                for (double v : a.data()) s += v;
            if (node.kind == OpKind::mean) {
                if (a.size() == 0) shape_error(node, "mean of empty array");
                s /= static_cast<double>(a.size());
            }
            node.value = DenseMatrix(1, 1, {s});
            return;
        }
        case OpKind::exp: node.value = map(in(0), [](double x) { return std::exp(x); }); return;
        case OpKind::log: node.value = map(in(0), [](double x) { return std::log(x); }); return;
        case OpKind::tanh: node.value = map(in(0), [](double x) { return std::tanh(x); }); return;
        case OpKind::sigmoid: node.value = map(in(0), stable_sigmoid); return;
        case OpKind::square: node.value = map(in(0), [](double x) { return x * x; }); return;
        case OpKind::relu:
            node.value = map(in(0), [](double x) { return x > 0.0 ? x : 0.0; });
            return;
        case OpKind::sqrt: node.value = map(in(0), [](double x) { return std::sqrt(x); }); return;
        case OpKind::softplus: node.value = map(in(0), stable_softplus); return;
        case OpKind::scale: {
            const double s = node.scalar;
            node.value = map(in(0), [s](double x) { return x * s; });
            return;
        }
        case OpKind::clamp: {
            const double lo = node.scalar, hi = node.scalar2;
            node.value = map(in(0), [lo, hi](double x) { return std::clamp(x, lo, hi); });
            return;
        }
        case OpKind::softmax_t:
        case OpKind::log_softmax: {
            const DenseMatrix& a = in(0);
            const double inv_t = node.kind == OpKind::softmax_t ? 1.0 / node.scalar : 1.0;
            DenseMatrix out(a.rows(), a.cols());
            for (std::size_t r = 0; r < a.rows(); ++r) {
                auto src = a.row(r);
                auto dst = out.row(r);
                double mx = -INFINITY;
                for (double v : src) mx = std::max(mx, v * inv_t);
                double z = 0.0;
                for (std::size_t c = 0; c < src.size(); ++c) z += std::exp(src[c] * inv_t - mx);
                if (node.kind == OpKind::softmax_t) {
                    for (std::size_t c = 0; c < src.size(); ++c)
                        dst[c] = std::exp(src[c] * inv_t - mx) / z;
                } else {
                    const double lse = mx + std::log(z);
                    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] - lse;
                }
            }
            node.value = std::move(out);
            return;
        }
        case OpKind::reshape: {
            const DenseMatrix& a = in(0);
            if (a.size() != node.r1 * node.c1)
                shape_error(node, shape_str(a) + " to " + std::to_string(node.r1) + "x" +
                                      std::to_string(node.c1));
            node.value = a.reshaped(node.r1, node.c1);
            return;
        }
        case OpKind::concat: {
            const std::size_t cols = in(0).cols();
            std::size_t rows = 0;
            for (std::size_t k = 0; k < node.parents.size(); ++k) {
                if (in(k).cols() != cols)
                    shape_error(node, "part " + std::to_string(k) + " is " + shape_str(in(k)));
                rows += in(k).rows();
            }
            DenseMatrix out(rows, cols);
            std::size_t offset = 0;
            for (std::size_t k = 0; k < node.parents.size(); ++k) {
                auto src = in(k).data();
                std::copy(src.begin(), src.end(), out.data().begin() + offset);
                offset += src.size();
            }
            node.value = std::move(out);
            return;
        }
        case OpKind::slice: {
            const DenseMatrix& a = in(0);
            if (node.r0 >= node.r1 || node.r1 > a.rows() || node.c0 >= node.c1 ||
                node.c1 > a.cols())
                shape_error(node, "range [" + std::to_string(node.r0) + "," +
                                      std::to_string(node.r1) + ")x[" + std::to_string(node.c0) +
                                      "," + std::to_string(node.c1) + ") of " + shape_str(a));
            DenseMatrix out(node.r1 - node.r0, node.c1 - node.c0);
            for (std::size_t r = node.r0; r < node.r1; ++r)
                for (std::size_t c = node.c0; c < node.c1; ++c)
                    out(r - node.r0, c - node.c0) = a(r, c);
            node.value = std::move(out);
            return;
        }
    }
}

void Graph::set_input(Var v, DenseMatrix value) {
    Node& n = nodes_.at(v.id);
    if (n.kind != OpKind::input)
        throw InvalidInputError("set_input: node " + std::to_string(v.id) + " is not an input");
    if (!n.value.same_shape(value))
        throw DimensionError("set_input: node " + std::to_string(v.id) + " '" + n.name +
                             "' expects " + shape_str(n.value) + ", got " + shape_str(value));
    n.value = std::move(value);
}

void Graph::forward() {
    for (Node& n : nodes_) evaluate(n);
}

void Graph::forward(const std::unordered_map<std::string, DenseMatrix>& bindings) {
    for (const auto& [name, value] : bindings) {
        bool bound = false;
        for (std::size_t id : input_ids_) {
            if (nodes_[id].name == name) {
                set_input(Var{id}, value);
                bound = true;
            }
        }
        if (!bound) throw InvalidInputError("forward: no input named '" + name + "'");
    }
    forward();
}

void Graph::propagate(const Node& node) {
    const DenseMatrix& g = node.adjoint;
    const DenseMatrix& y = node.value;
    auto parent = [&](std::size_t k) -> Node& { return nodes_[node.parents[k]]; };
    auto wants = [&](std::size_t k) { return parent(k).needs_grad; };
    auto accumulate_map = [&](std::size_t k, auto f) {
        Node& p = parent(k);
        auto dst = p.adjoint.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += f(i);
    };

    switch (node.kind) {
        case OpKind::input:
            return;
        case OpKind::add:
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i]; });
            if (wants(1)) accumulate_map(1, [&](std::size_t i) { return g[i]; });
            return;
        case OpKind::sub:
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i]; });
            if (wants(1)) accumulate_map(1, [&](std::size_t i) { return -g[i]; });
            return;
        case OpKind::mul: {
            const DenseMatrix& a = parent(0).value;
            const DenseMatrix& b = parent(1).value;
            if (a.same_shape(b)) {
                if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i] * b[i]; });
                if (wants(1)) accumulate_map(1, [&](std::size_t i) { return g[i] * a[i]; });
            } else {
                const std::size_t s_idx = a.size() == 1 ? 0 : 1;
                const std::size_t m_idx = 1 - s_idx;
                const DenseMatrix& s = parent(s_idx).value;
                const DenseMatrix& m = parent(m_idx).value;
                if (wants(m_idx)) accumulate_map(m_idx, [&](std::size_t i) { return g[i] * s[0]; });
                if (wants(s_idx)) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * m[i];
                    parent(s_idx).adjoint[0] += acc;
                }
            }
            return;
        }
        case OpKind::matmul: {
            const DenseMatrix& a = parent(0).value;
            const DenseMatrix& b = parent(1).value;
            if (wants(0))
                kernels::gemm_nt(g.data(), b.data(), parent(0).adjoint.data(), a.rows(), b.cols(),
                                 a.cols(), true);
            if (wants(1))
                kernels::gemm_tn(a.data(), g.data(), parent(1).adjoint.data(), a.cols(), a.rows(),
                                 b.cols(), true);
            return;
        }
        case OpKind::batched_matmul: {
            const DenseMatrix& a = parent(0).value;
            const DenseMatrix& b = parent(1).value;
            const std::size_t side = node.r0;
            const std::size_t block = side * side;
            for (std::size_t r = 0; r < a.rows(); ++r) {
                auto gr = g.data().subspan(r * block, block);
                if (wants(0))
                    kernels::serial::gemm_nt(gr, b.data().subspan(r * block, block),
                                             parent(0).adjoint.data().subspan(r * block, block),
                                             side, side, side, true);
                if (wants(1))
                    kernels::serial::gemm_tn(a.data().subspan(r * block, block), gr,
                                             parent(1).adjoint.data().subspan(r * block, block),
                                             side, side, side, true);
            }
            return;
        }
        case OpKind::add_row: {
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i]; });
            if (wants(1)) {
                auto dst = parent(1).adjoint.data();
                for (std::size_t r = 0; r < g.rows(); ++r) {
                    auto grow = g.row(r);
                    for (std::size_t c = 0; c < grow.size(); ++c) dst[c] += grow[c];
                }
            }
            return;
        }
        case OpKind::sum:
            if (wants(0)) accumulate_map(0, [&](std::size_t) { return g[0]; });
            return;
        case OpKind::mean: {
            const double gn = g[0] / static_cast<double>(parent(0).value.size());
            if (wants(0)) accumulate_map(0, [&](std::size_t) { return gn; });
            return;
        }
        case OpKind::frobenius_sq: {
            const DenseMatrix& a = parent(0).value;
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return 2.0 * a[i] * g[0]; });
            return;
        }
        case OpKind::exp:
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i] * y[i]; });
            return;
        case OpKind::log: {
            const DenseMatrix& a = parent(0).value;
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i] / a[i]; });
            return;
        }
        case OpKind::tanh:
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i] * (1.0 - y[i] * y[i]); });
            return;
        case OpKind::sigmoid:
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i] * y[i] * (1.0 - y[i]); });
            return;
        case OpKind::square: {
            const DenseMatrix& a = parent(0).value;
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return 2.0 * a[i] * g[i]; });
            return;
        }
        case OpKind::relu: {
            const DenseMatrix& a = parent(0).value;
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return a[i] > 0.0 ? g[i] : 0.0; });
            return;
        }
        case OpKind::sqrt:
            if (wants(0))
                accumulate_map(0, [&](std::size_t i) { return y[i] > 0.0 ? 0.5 * g[i] / y[i] : 0.0; });
            return;
        case OpKind::softplus: {
            const DenseMatrix& a = parent(0).value;
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i] * stable_sigmoid(a[i]); });
            return;
        }
        case OpKind::scale:
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i] * node.scalar; });
            return;
        case OpKind::clamp: {
            const DenseMatrix& a = parent(0).value;
            const double lo = node.scalar, hi = node.scalar2;
            if (wants(0))
                accumulate_map(0, [&](std::size_t i) {
                    return (a[i] >= lo && a[i] <= hi) ? g[i] : 0.0;
                });
            return;
        }
        case OpKind::softmax_t: {
            if (!wants(0)) return;
            const double inv_t = 1.0 / node.scalar;
            auto dst = parent(0).adjoint.data();
            for (std::size_t r = 0; r < y.rows(); ++r) {
                auto yr = y.row(r);
                auto gr = g.row(r);
                double dot = 0.0;
                for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
                for (std::size_t c = 0; c < yr.size(); ++c)
                    dst[r * y.cols() + c] += inv_t * yr[c] * (gr[c] - dot);
            }
            return;
        }
        case OpKind::log_softmax: {
            if (!wants(0)) return;
            auto dst = parent(0).adjoint.data();
            for (std::size_t r = 0; r < y.rows(); ++r) {
                auto yr = y.row(r);
                auto gr = g.row(r);
                double gsum = 0.0;
                for (double v : gr) gsum += v;
                for (std::size_t c = 0; c < yr.size(); ++c)
                    dst[r * y.cols() + c] += gr[c] - std::exp(yr[c]) * gsum;
            }
            return;
        }
        case OpKind::reshape:
            if (wants(0)) accumulate_map(0, [&](std::size_t i) { return g[i]; });
            return;
        case OpKind::concat: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < node.parents.size(); ++k) {
                const std::size_t len = parent(k).value.size();
                if (wants(k)) accumulate_map(k, [&](std::size_t i) { return g[offset + i]; });
                offset += len;
            }
            return;
        }
        case OpKind::slice: {
            if (!wants(0)) return;
            DenseMatrix& pa = parent(0).adjoint;
            for (std::size_t r = node.r0; r < node.r1; ++r)
                for (std::size_t c = node.c0; c < node.c1; ++c)
                    pa(r, c) += g(r - node.r0, c - node.c0);
            return;
        }
    }
}

void Graph::backward(Var output) {
    const Node& out = nodes_.at(output.id);
    if (out.value.size() != 1)
        throw InvalidInputError("backward: output node " + std::to_string(output.id) + " is " +
                                shape_str(out.value) + ", expected 1x1");
    for (std::size_t i = 0; i <= output.id; ++i) {
        Node& n = nodes_[i];
        if (n.needs_grad)
            n.adjoint = DenseMatrix(n.value.rows(), n.value.cols());
        else
            n.adjoint = DenseMatrix();
    }
    for (std::size_t i = output.id + 1; i < nodes_.size(); ++i) nodes_[i].adjoint = DenseMatrix();
    if (!nodes_[output.id].needs_grad) return;
    nodes_[output.id].adjoint[0] = 1.0;
    for (std::size_t i = output.id + 1; i-- > 0;) {
        if (nodes_[i].needs_grad && nodes_[i].kind != OpKind::input) propagate(nodes_[i]);
    }
}

std::vector<Var> Graph::trainable_inputs() const {
    std::vector<Var> out;
    for (std::size_t id : input_ids_)
        if (nodes_[id].trainable) out.push_back(Var{id});
    return out;
}

std::map<std::string, DenseMatrix> Graph::gradients() const {
    std::map<std::string, DenseMatrix> out;
    for (Var v : trainable_inputs()) {
        const Node& n = nodes_[v.id];
        DenseMatrix g = n.adjoint.size() == n.value.size() ? n.adjoint
                                                           : DenseMatrix(n.value.rows(), n.value.cols());
        auto [it, inserted] = out.emplace(n.name, g);
        if (!inserted)
            for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
    }
    return out;
}

GradientCheckReport check_gradients(Graph& graph, Var output, double tolerance,
                                    const GradientCheckOptions& options) {
    graph.forward();
    graph.backward(output);
    GradientCheckReport report;
    std::mt19937_64 rng(options.seed);

    for (Var leaf : graph.trainable_inputs()) {
        GradientCheckEntry entry;
        entry.name = graph.name(leaf);
        const DenseMatrix analytic = graph.grad(leaf);
        const DenseMatrix original = graph.value(leaf);

        std::vector<std::size_t> indices(original.size());
        std::iota(indices.begin(), indices.end(), std::size_t{0});
        if (options.max_entries_per_input != 0 && indices.size() > options.max_entries_per_input) {
            std::shuffle(indices.begin(), indices.end(), rng);
            indices.resize(options.max_entries_per_input);
            std::sort(indices.begin(), indices.end());
        }

        DenseMatrix probe = original;
        auto at = [&](std::size_t idx, double offset) {
            probe[idx] = original[idx] + offset;
            graph.set_input(leaf, probe);
            graph.forward();
            probe[idx] = original[idx];
            return graph.scalar_value(output);
        };
        for (std::size_t idx : indices) {
            const double h = options.step;
            const double near = at(idx, h) - at(idx, -h);
            const double numeric = options.fourth_order ? (8.0 * near - (at(idx, 2.0 * h) - at(idx, -2.0 * h))) / (12.0 * h)
                                                        : near / (2.0 * h);
            const double a = analytic[idx];
            const double denom =
                std::max({std::abs(a), std::abs(numeric), options.abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            entry.max_rel_error = std::max(entry.max_rel_error, rel);
            ++entry.checked;
            if (!(rel <= tolerance)) ++entry.flagged;
        }
        graph.set_input(leaf, original);
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        if (entry.flagged != 0) report.passed = false;
        report.entries.push_back(std::move(entry));
    }
    graph.forward();
    graph.backward(output);
    return report;
}

void ParameterSet::add(const std::string& name, DenseMatrix value) {
    if (contains(name)) throw InvalidInputError("ParameterSet: duplicate parameter '" + name + "'");
    Slot slot;
    slot.first_moment = DenseMatrix(value.rows(), value.cols());
    slot.second_moment = DenseMatrix(value.rows(), value.cols());
    slot.value = std::move(value);
    slots_.emplace(name, std::move(slot));
}

const ParameterSet::Slot& ParameterSet::slot(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw InvalidInputError("ParameterSet: unknown parameter '" + name + "'");
    return it->second;
}

ParameterSet::Slot& ParameterSet::mutable_slot(const std::string& name) {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw InvalidInputError("ParameterSet: unknown parameter '" + name + "'");
    return it->second;
}

const DenseMatrix& ParameterSet::value(const std::string& name) const { return slot(name).value; }
DenseMatrix& ParameterSet::mutable_value(const std::string& name) { return mutable_slot(name).value; }

void ParameterSet::reset_moments() {
    for (auto& [name, slot] : slots_) {
        slot.first_moment = DenseMatrix(slot.value.rows(), slot.value.cols());
        slot.second_moment = DenseMatrix(slot.value.rows(), slot.value.cols());
    }
    step_ = 0;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
    if (step_ != other.step_ || slots_.size() != other.slots_.size()) return false;
    for (const auto& [name, slot] : slots_) {
        auto it = other.slots_.find(name);
        if (it == other.slots_.end()) return false;
        const Slot& o = it->second;
        if (!(slot.value == o.value && slot.first_moment == o.first_moment &&
              slot.second_moment == o.second_moment))
            return false;
    }
    return true;
}

void adam_update(ParameterSet& params, const std::map<std::string, DenseMatrix>& grads,
                 const AdamSettings& settings) {
    for (const auto& [name, g] : grads) {
        if (!params.contains(name))
            throw DimensionError("adam_update: gradient for unknown parameter '" + name + "'");
        if (!params.value(name).same_shape(g))
            throw DimensionError("adam_update: gradient shape mismatch for '" + name + "'");
    }
    params.set_step(params.step() + 1);
    const double t = static_cast<double>(params.step());
    const double bias1 = 1.0 - std::pow(settings.beta1, t);
    const double bias2 = 1.0 - std::pow(settings.beta2, t);

    for (const auto& [name, unused] : params.slots()) {
        ParameterSet::Slot& slot = params.mutable_slot(name);
        auto it = grads.find(name);
        const DenseMatrix* g = it == grads.end() ? nullptr : &it->second;
        auto value = slot.value.data();
        auto m = slot.first_moment.data();
        auto v = slot.second_moment.data();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            m[i] = settings.beta1 * m[i] + (1.0 - settings.beta1) * gi;
            v[i] = settings.beta2 * v[i] + (1.0 - settings.beta2) * gi * gi;
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            value[i] -= settings.lr * m_hat / (std::sqrt(v_hat) + settings.eps);
        }
    }
}

}  // namespace lgvae
