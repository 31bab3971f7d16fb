#pragma once

// Reverse-mode differentiation over DenseMatrix values.
//
// A Graph is a tape: every node is appended after its parents and evaluated
// eagerly when created. Input nodes can be rebound and the whole tape
// re-evaluated with forward(), which is what finite-difference checking uses.
// Broadcasting is limited to a 1×1 operand in mul() and a row-vector bias in
// add_row().

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lgvae/matcore.hpp"

namespace lgvae {

enum class OpKind : std::uint8_t {
    input,
    add,
    sub,
    mul,
    matmul,
    sum,
    mean,
    exp,
    log,
    tanh,
    sigmoid,
    softmax_t,
    square,
    reshape,
    concat,
    slice,
    frobenius_sq,
    relu,
    // helpers outside the core list
    scale,
    add_row,
    sqrt,
    softplus,
    log_softmax,
    clamp,
    batched_matmul,
};

const char* op_name(OpKind kind);

struct Var {
    std::size_t id = 0;
};

class Graph {
public:
    /// Leaf node. Trainable leaves receive gradients; constants do not.
    Var input(DenseMatrix value, std::string name = {}, bool trainable = false);
    Var constant(DenseMatrix value) { return input(std::move(value)); }
    Var scalar(double v) { return input(DenseMatrix(1, 1, {v})); }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    /// Elementwise product; either operand may be 1×1.
    Var mul(Var a, Var b);
    Var matmul(Var a, Var b);
    Var sum(Var a);
    Var mean(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    /// Row-wise softmax(a / temperature).
    Var softmax(Var a, double temperature);
    Var square(Var a);
    Var reshape(Var a, std::size_t rows, std::size_t cols);
    /// Stacks along rows; all parts must share the column count.
    Var concat_rows(const std::vector<Var>& parts);
    Var slice(Var a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
              std::size_t col_end);
    Var slice_rows(Var a, std::size_t begin, std::size_t end);
    Var slice_cols(Var a, std::size_t begin, std::size_t end);
    Var frobenius_sq(Var a);
    /// Subgradient at 0 is 0.
    Var relu(Var a);

    Var scale(Var a, double s);
    /// a[B×n] + bias[1×n] on every row.
    Var add_row(Var a, Var bias);
    /// Gradient at exactly 0 is taken as 0.
    Var sqrt(Var a);
    Var softplus(Var a);
    Var log_softmax(Var a);
    /// Passes gradient only where lo ≤ a ≤ hi.
    Var clamp(Var a, double lo, double hi);
    /// Each row of a and b is a row-major side×side matrix; row r of the
    /// result is a_r · b_r.
    Var batched_matmul(Var a, Var b, std::size_t side);

    const DenseMatrix& value(Var v) const { return nodes_.at(v.id).value; }
    double scalar_value(Var v) const;
    const DenseMatrix& grad(Var v) const;
    OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
    const std::string& name(Var v) const { return nodes_.at(v.id).name; }
    bool trainable(Var v) const { return nodes_.at(v.id).trainable; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Rebinds an input leaf. Throws DimensionError when the shape changes.
    void set_input(Var v, DenseMatrix value);
    /// Re-evaluates every non-input node in tape order.
    void forward();
    /// Rebinds the named inputs, then re-evaluates.
    void forward(const std::unordered_map<std::string, DenseMatrix>& bindings);
    /// Populates adjoints for every node that depends on a trainable input.
    /// Throws InvalidInputError when `output` is not 1×1.
    void backward(Var output);

    std::vector<Var> trainable_inputs() const;
    /// Gradients of the trainable inputs, keyed by input name.
    std::map<std::string, DenseMatrix> gradients() const;

private:
    struct Node {
        OpKind kind = OpKind::input;
        std::vector<std::size_t> parents;
        DenseMatrix value;
        DenseMatrix adjoint;
        std::string name;
        bool trainable = false;
        bool needs_grad = false;
        double scalar = 0.0;
        double scalar2 = 0.0;
        std::size_t r0 = 0, r1 = 0, c0 = 0, c1 = 0;
    };

    Var push(Node node);
    void evaluate(Node& node) const;
    void propagate(const Node& node);
    [[noreturn]] void shape_error(const Node& node, const std::string& detail) const;

    std::vector<Node> nodes_;
    std::vector<std::size_t> input_ids_;
};

/// Per-input result of comparing backward() against central differences.
struct GradientCheckEntry {
    std::string name;
    std::size_t checked = 0;
    std::size_t flagged = 0;
    double max_rel_error = 0.0;
};

struct GradientCheckReport {
    std::vector<GradientCheckEntry> entries;
    double max_rel_error = 0.0;
    bool passed = true;
};

struct GradientCheckOptions {
    double step = 1e-5;
    /// Relative error is |analytic − numeric| / max(|analytic|, |numeric|, abs_floor).
    double abs_floor = 1e-7;
    /// Entries sampled per input (0 checks every entry).
    std::size_t max_entries_per_input = 0;
    std::uint64_t seed = 0;
    /// Five-point stencil instead of the three-point one. Permits a larger
    /// step on objectives whose magnitude makes small steps rounding-bound.
    bool fourth_order = false;
};

/// Central finite differences against backward() for every trainable input.
/// Leaves the graph's inputs and values as it found them.
GradientCheckReport check_gradients(Graph& graph, Var output, double tolerance,
                                    const GradientCheckOptions& options = {});

/// Named parameters with Adam moment accumulators.
class ParameterSet {
public:
    struct Slot {
        DenseMatrix value;
        DenseMatrix first_moment;
        DenseMatrix second_moment;
    };

    void add(const std::string& name, DenseMatrix value);
    bool contains(const std::string& name) const { return slots_.count(name) != 0; }
    const DenseMatrix& value(const std::string& name) const;
    DenseMatrix& mutable_value(const std::string& name);
    const Slot& slot(const std::string& name) const;
    Slot& mutable_slot(const std::string& name);
    const std::map<std::string, Slot>& slots() const noexcept { return slots_; }

    std::uint64_t step() const noexcept { return step_; }
    void set_step(std::uint64_t step) noexcept { step_ = step; }
    void reset_moments();

    bool operator==(const ParameterSet& other) const;

private:
    std::map<std::string, Slot> slots_;
    std::uint64_t step_ = 0;
};

struct AdamSettings {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam step over every parameter; a parameter missing
/// from `grads` is stepped with a zero gradient. Throws DimensionError for an
/// unknown name or a shape mismatch.
void adam_update(ParameterSet& params, const std::map<std::string, DenseMatrix>& grads,
                 const AdamSettings& settings);

}  // namespace lgvae
