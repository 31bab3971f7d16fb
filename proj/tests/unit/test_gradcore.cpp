#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lgvae/errors.hpp"
#include "lgvae/gradcore.hpp"
#include "lgvae/liegroup.hpp"
#include "support.hpp"

using namespace lgvae;
using lgvae::testing::random_matrix;

namespace {

struct Shape {
    std::size_t rows, cols;
};

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

// Builds sum(op(inputs) ⊙ W) with a random constant W so every output entry
// carries a distinct weight, then runs the finite-difference check.
GradientCheckReport check_op(const Builder& op, const std::vector<Shape>& shapes, double lo, double hi,
                             std::uint64_t seed, double tolerance = 1e-5) {
    std::mt19937_64 rng(seed);
    Graph g;
    std::vector<Var> inputs;
    for (std::size_t k = 0; k < shapes.size(); ++k)
        inputs.push_back(g.input(random_matrix(shapes[k].rows, shapes[k].cols, rng, lo, hi),
                                 "x" + std::to_string(k), true));
    const Var y = op(g, inputs);
    const DenseMatrix& yv = g.value(y);
    const Var w = g.constant(random_matrix(yv.rows(), yv.cols(), rng, 0.5, 1.5));
    const Var out = g.sum(g.mul(y, w));
    return check_gradients(g, out, tolerance);
}

}  // namespace

TEST_CASE("forward examples") {
    Graph g;
    const Var x = g.input(DenseMatrix{{1, 2, 3}}, "x");
    CHECK(g.scalar_value(g.sum(x)) == 6.0);

    const Var col = g.input(DenseMatrix{{5}, {7}}, "col");
    CHECK(g.value(g.matmul(g.constant(DenseMatrix::identity(2)), col)) == DenseMatrix{{5}, {7}});
    CHECK(g.scalar_value(g.frobenius_sq(g.constant(DenseMatrix{{3, 4}, {0, 0}}))) == 25.0);
}

TEST_CASE("forward re-evaluates after rebinding and names the failing node") {
    Graph g;
    const Var x = g.input(DenseMatrix{{1, 2}}, "x");
    const Var s = g.sum(g.square(x));
    CHECK(g.scalar_value(s) == 5.0);
    g.forward({{"x", DenseMatrix{{3, 4}}}});
    CHECK(g.scalar_value(s) == 25.0);
    CHECK_THROWS_AS(g.set_input(x, DenseMatrix{{1, 2, 3}}), DimensionError);

    Graph h;
    const Var a = h.input(DenseMatrix(2, 3), "a");
    const Var b = h.input(DenseMatrix(3, 2), "b");
    h.matmul(a, b);
    CHECK_THROWS_AS(h.add(a, b), DimensionError);
    try {
        h.add(a, b);
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("add") != std::string::npos);
    }
}

TEST_CASE("backward examples") {
    Graph g;
    const Var x = g.input(DenseMatrix{{1, 2}}, "x", true);
    const Var out = g.sum(g.square(x));
    g.backward(out);
    CHECK(g.grad(x) == DenseMatrix{{2, 4}});

    Graph c;
    const Var unused = c.input(DenseMatrix{{1, 2, 3}}, "x", true);
    const Var k = c.sum(c.constant(DenseMatrix{{4, 5}}));
    c.backward(k);
    CHECK(c.gradients().at("x") == DenseMatrix(1, 3));
    (void)unused;

    CHECK_THROWS_AS(g.backward(g.square(x)), InvalidInputError);
}

TEST_CASE("gradient through the unrolled matrix exponential") {
    // exp(tA) = I + tA for the nilpotent A, so ‖exp(tA)‖² = 2 + t² and the
    // derivative at t = 0.3 is 0.6.
    Graph g;
    const Var t = g.input(DenseMatrix{{0.3}}, "t", true);
    const Var a = g.constant(DenseMatrix{{0, 1, 0, 0}});
    const Var e = lie_graph::exp(g, g.matmul(t, a), 2);
    const Var out = g.frobenius_sq(e);
    g.backward(out);
    CHECK(g.grad(t)(0, 0) == doctest::Approx(0.6).epsilon(1e-12));

    const double h = 1e-5;
    auto f = [](double tv) { return 2.0 + tv * tv; };
    const double fd = (f(0.3 + h) - f(0.3 - h)) / (2 * h);
    CHECK(std::abs(g.grad(t)(0, 0) - fd) / std::abs(fd) < 1e-5);
    CHECK(check_gradients(g, out, 1e-5).passed);
}

TEST_CASE("every primitive passes the finite-difference check") {
    struct Case {
        const char* name;
        Builder op;
        std::vector<Shape> shapes;
        double lo, hi;
    };
    const std::vector<Case> cases = {
        {"add", [](Graph& g, const std::vector<Var>& v) { return g.add(v[0], v[1]); }, {{3, 4}, {3, 4}}, -1, 1},
        {"sub", [](Graph& g, const std::vector<Var>& v) { return g.sub(v[0], v[1]); }, {{3, 4}, {3, 4}}, -1, 1},
        {"mul", [](Graph& g, const std::vector<Var>& v) { return g.mul(v[0], v[1]); }, {{3, 4}, {3, 4}}, -1, 1},
        {"mul-scalar", [](Graph& g, const std::vector<Var>& v) { return g.mul(v[0], v[1]); }, {{1, 1}, {3, 4}}, -1, 1},
        {"matmul", [](Graph& g, const std::vector<Var>& v) { return g.matmul(v[0], v[1]); }, {{3, 5}, {5, 2}}, -1, 1},
        {"sum", [](Graph& g, const std::vector<Var>& v) { return g.sum(v[0]); }, {{3, 4}}, -1, 1},
        {"mean", [](Graph& g, const std::vector<Var>& v) { return g.mean(v[0]); }, {{3, 4}}, -1, 1},
        {"exp", [](Graph& g, const std::vector<Var>& v) { return g.exp(v[0]); }, {{3, 4}}, -2, 2},
        {"log", [](Graph& g, const std::vector<Var>& v) { return g.log(v[0]); }, {{3, 4}}, 0.2, 3},
        {"tanh", [](Graph& g, const std::vector<Var>& v) { return g.tanh(v[0]); }, {{3, 4}}, -2, 2},
        {"sigmoid", [](Graph& g, const std::vector<Var>& v) { return g.sigmoid(v[0]); }, {{3, 4}}, -3, 3},
        {"softmax", [](Graph& g, const std::vector<Var>& v) { return g.softmax(v[0], 0.67); }, {{3, 4}}, -2, 2},
        {"square", [](Graph& g, const std::vector<Var>& v) { return g.square(v[0]); }, {{3, 4}}, -2, 2},
        {"reshape", [](Graph& g, const std::vector<Var>& v) { return g.reshape(v[0], 2, 6); }, {{3, 4}}, -1, 1},
        {"concat", [](Graph& g, const std::vector<Var>& v) { return g.concat_rows({v[0], v[1], v[0]}); },
         {{2, 3}, {4, 3}}, -1, 1},
        {"slice", [](Graph& g, const std::vector<Var>& v) { return g.slice(v[0], 1, 3, 1, 4); }, {{4, 5}}, -1, 1},
        {"frobenius_sq", [](Graph& g, const std::vector<Var>& v) { return g.frobenius_sq(v[0]); }, {{3, 4}}, -1, 1},
        {"relu", [](Graph& g, const std::vector<Var>& v) { return g.relu(v[0]); }, {{3, 4}}, 0.05, 1},
        {"relu-negative", [](Graph& g, const std::vector<Var>& v) { return g.relu(v[0]); }, {{3, 4}}, -1, -0.05},
        {"scale", [](Graph& g, const std::vector<Var>& v) { return g.scale(v[0], -2.5); }, {{3, 4}}, -1, 1},
        {"add_row", [](Graph& g, const std::vector<Var>& v) { return g.add_row(v[0], v[1]); }, {{3, 4}, {1, 4}}, -1, 1},
        {"sqrt", [](Graph& g, const std::vector<Var>& v) { return g.sqrt(v[0]); }, {{3, 4}}, 0.2, 3},
        {"softplus", [](Graph& g, const std::vector<Var>& v) { return g.softplus(v[0]); }, {{3, 4}}, -4, 4},
        {"log_softmax", [](Graph& g, const std::vector<Var>& v) { return g.log_softmax(v[0]); }, {{3, 4}}, -2, 2},
        {"clamp", [](Graph& g, const std::vector<Var>& v) { return g.clamp(v[0], -10, 10); }, {{3, 4}}, -5, 5},
        {"batched_matmul", [](Graph& g, const std::vector<Var>& v) { return g.batched_matmul(v[0], v[1], 3); },
         {{4, 9}, {4, 9}}, -1, 1},
        {"lie-exp", [](Graph& g, const std::vector<Var>& v) { return lie_graph::exp(g, v[0], 3); }, {{4, 9}}, -1, 1},
    };
    std::uint64_t seed = 100;
    for (const auto& c : cases) {
        CAPTURE(c.name);
        const GradientCheckReport report = check_op(c.op, c.shapes, c.lo, c.hi, ++seed);
        CHECK(report.passed);
        CHECK(report.max_rel_error < 1e-5);
    }
}

TEST_CASE("clamp blocks gradient outside its interval and relu has zero subgradient at 0") {
    Graph g;
    const Var x = g.input(DenseMatrix{{-3, 0, 3}}, "x", true);
    g.backward(g.sum(g.clamp(x, -1, 1)));
    CHECK(g.grad(x) == DenseMatrix{{0, 1, 0}});

    Graph h;
    const Var y = h.input(DenseMatrix{{-1, 0, 2}}, "y", true);
    h.backward(h.sum(h.relu(y)));
    CHECK(h.grad(y) == DenseMatrix{{0, 0, 1}});
}

TEST_CASE("check_gradients examples") {
    std::mt19937_64 rng(7);
    Graph g;
    const Var w = g.input(random_matrix(1, 6, rng), "w", true);
    const Var x = g.constant(random_matrix(6, 1, rng));
    const GradientCheckReport linear = check_gradients(g, g.matmul(w, x), 1e-9);
    CHECK(linear.passed);
    CHECK(linear.max_rel_error < 1e-9);

    const GradientCheckReport soft =
        check_op([](Graph& gg, const std::vector<Var>& v) { return gg.softmax(v[0], 0.67); }, {{1, 5}}, -2, 2, 8);
    CHECK(soft.max_rel_error < 1e-6);

    // A deliberately wrong tolerance flags entries without throwing.
    Graph n;
    const Var z = n.input(DenseMatrix{{0.7, -0.4}}, "z", true);
    const GradientCheckReport strict = check_gradients(n, n.sum(n.exp(n.square(z))), 0.0);
    CHECK(strict.entries.size() == 1);
    CHECK(strict.entries[0].checked == 2);
}

TEST_CASE("the five-point stencil removes the leading truncation error") {
    // d/dx sum(exp(x)) = exp(x); at a coarse step the three-point estimate is
    // off by h²/6 relative, the five-point one by h⁴/30.
    Graph g;
    const Var x = g.input(DenseMatrix{{0.3, -0.8, 1.1}}, "x", true);
    const Var out = g.sum(g.exp(x));
    GradientCheckOptions coarse;
    coarse.step = 0.05;
    const GradientCheckReport second = check_gradients(g, out, 1.0, coarse);
    coarse.fourth_order = true;
    const GradientCheckReport fourth = check_gradients(g, out, 1.0, coarse);
    CHECK(second.max_rel_error == doctest::Approx(0.05 * 0.05 / 6.0).epsilon(1e-2));
    CHECK(fourth.max_rel_error == doctest::Approx(std::pow(0.05, 4) / 30.0).epsilon(5e-2));
    CHECK(g.value(x) == DenseMatrix{{0.3, -0.8, 1.1}});
}

TEST_CASE("property: forward and backward are bitwise deterministic") {
    auto run = [] {
        std::mt19937_64 rng(9);
        Graph g;
        const Var w = g.input(random_matrix(5, 4, rng), "w", true);
        const Var b = g.input(random_matrix(1, 4, rng), "b", true);
        const Var x = g.constant(random_matrix(8, 5, rng));
        const Var out = g.mean(g.softplus(g.add_row(g.matmul(x, w), b)));
        g.backward(out);
        return g.gradients();
    };
    CHECK(run() == run());
}

TEST_CASE("property: gradient of a batch sum is the sum of per-sample gradients") {
    std::mt19937_64 rng(10);
    const DenseMatrix w0 = random_matrix(4, 3, rng);
    const DenseMatrix x = random_matrix(6, 4, rng);
    auto grad_for = [&](std::size_t begin, std::size_t end) {
        Graph g;
        const Var w = g.input(w0, "w", true);
        const Var xs = g.constant(x);
        const Var out = g.sum(g.tanh(g.matmul(g.slice_rows(xs, begin, end), w)));
        g.backward(out);
        return g.gradients().at("w");
    };
    const DenseMatrix whole = grad_for(0, 6);
    DenseMatrix parts(4, 3);
    for (std::size_t r = 0; r < 6; ++r) parts = add(parts, grad_for(r, r + 1));
    CHECK(lgvae::testing::max_abs_diff(whole, parts) < 1e-10);
}

TEST_CASE("gradients() sums duplicate bindings of one name") {
    Graph g;
    const Var a = g.input(DenseMatrix{{2}}, "p", true);
    const Var b = g.input(DenseMatrix{{2}}, "p", true);
    g.backward(g.mul(a, b));
    CHECK(g.gradients().at("p") == DenseMatrix{{4}});
}

TEST_CASE("adam: zero gradient keeps parameters and decays moments") {
    ParameterSet p;
    p.add("w", DenseMatrix{{1, -2}});
    p.mutable_slot("w").first_moment = DenseMatrix{{0.5, 0.5}};
    p.mutable_slot("w").second_moment = DenseMatrix{{0.25, 0.25}};
    p.set_step(3);
    const AdamSettings s;
    adam_update(p, {{"w", DenseMatrix(1, 2)}}, s);
    // With nonzero moments a zero gradient still moves the parameter; the
    // decay itself is exact.
    CHECK(p.slot("w").first_moment == DenseMatrix{{0.45, 0.45}});
    CHECK(p.slot("w").second_moment(0, 0) == doctest::Approx(0.25 * 0.999).epsilon(1e-15));
    CHECK(p.step() == 4);

    ParameterSet fresh;
    fresh.add("w", DenseMatrix{{1, -2}});
    adam_update(fresh, {}, s);
    CHECK(fresh.value("w") == DenseMatrix{{1, -2}});
    CHECK(fresh.slot("w").first_moment == DenseMatrix(1, 2));
}

TEST_CASE("adam: first step closed form and two-step scalar recurrence") {
    const AdamSettings s{0.01, 0.9, 0.999, 1e-8};
    ParameterSet p;
    p.add("w", DenseMatrix{{0.5, -1.0, 2.0}});
    const DenseMatrix g{{0.3, -2.0, 1e-3}};
    adam_update(p, {{"w", g}}, s);
    const DenseMatrix start{{0.5, -1.0, 2.0}};
    for (std::size_t i = 0; i < 3; ++i) {
        const double expected = start[i] - s.lr * g[i] / (std::abs(g[i]) + s.eps);
        CHECK(p.value("w")[i] == doctest::Approx(expected).epsilon(1e-14));
    }

    // scalar reference trajectory for two identical steps
    double w = 0.5, m = 0, v = 0;
    for (int t = 1; t <= 2; ++t) {
        const double grad = 0.3;
        m = s.beta1 * m + (1 - s.beta1) * grad;
        v = s.beta2 * v + (1 - s.beta2) * grad * grad;
        const double mh = m / (1 - std::pow(s.beta1, t));
        const double vh = v / (1 - std::pow(s.beta2, t));
        w -= s.lr * mh / (std::sqrt(vh) + s.eps);
    }
    ParameterSet q;
    q.add("w", DenseMatrix{{0.5}});
    adam_update(q, {{"w", DenseMatrix{{0.3}}}}, s);
    adam_update(q, {{"w", DenseMatrix{{0.3}}}}, s);
    CHECK(q.value("w")(0, 0) == doctest::Approx(w).epsilon(1e-14));
    CHECK(q.step() == 2);
}

TEST_CASE("adam rejects unknown names and shape mismatches") {
    ParameterSet p;
    p.add("w", DenseMatrix{{1, 2}});
    CHECK_THROWS_AS(adam_update(p, {{"w", DenseMatrix(2, 1)}}, {}), DimensionError);
    CHECK_THROWS_AS(adam_update(p, {{"v", DenseMatrix(1, 2)}}, {}), DimensionError);
}
