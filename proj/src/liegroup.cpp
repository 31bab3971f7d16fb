#include "lgvae/liegroup.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "lgvae/errors.hpp"
#include "lgvae/kernels.hpp"

namespace lgvae {

GeneratorBank::GeneratorBank(std::size_t n, DenseMatrix rows) : side_(n), rows_(std::move(rows)) {
    if (rows_.cols() != n * n)
        throw DimensionError("GeneratorBank: rows have " + std::to_string(rows_.cols()) +
                             " entries, expected " + std::to_string(n * n));
    if (!rows_.all_finite()) throw InvalidInputError("GeneratorBank: non-finite generator entry");
}

DenseMatrix GeneratorBank::generator(std::size_t k) const {
    if (k >= dims()) throw InvalidInputError("GeneratorBank: generator index out of range");
    auto r = rows_.row(k);
    return DenseMatrix(side_, side_, std::vector<double>(r.begin(), r.end()));
}

GeneratorBank init_generators(std::size_t d, std::size_t n, double scale, std::uint64_t seed) {
    if (d < 2) throw InvalidInputError("init_generators: need d >= 2 for pairwise diagnostics");
    if (n < 2) throw InvalidInputError("init_generators: need n >= 2");
    if (!(scale >= 0.0)) throw InvalidInputError("init_generators: scale must be >= 0");
    DenseMatrix rows(d, n * n);
    if (scale > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, scale);
        for (double& v : rows.data()) v = normal(rng);
    }
    return GeneratorBank(n, std::move(rows));
}

DenseMatrix assemble_algebra(const GeneratorBank& bank, std::span<const double> t) {
    if (t.size() != bank.dims())
        throw DimensionError("assemble_algebra: |t|=" + std::to_string(t.size()) + ", d=" +
                             std::to_string(bank.dims()));
    const std::size_t n = bank.side();
    DenseMatrix a(n, n);
    for (std::size_t k = 0; k < t.size(); ++k) {
        auto gk = bank.rows().row(k);
        for (std::size_t e = 0; e < n * n; ++e) a[e] += t[k] * gk[e];
    }
    return a;
}

DenseMatrix group_element(const GeneratorBank& bank, std::span<const double> t) {
    return mat_exp(assemble_algebra(bank, t));
}

std::vector<double> act(const DenseMatrix& g, std::span<const double> e) {
    if (!g.is_square()) throw DimensionError("act: group element must be square");
    const std::size_t n = g.rows();
    if (e.size() == n * n) {
        std::vector<double> out(n * n);
        kernels::gemm_nn(g.data(), e, out, n, n, n);
        return out;
    }
    if (e.size() == n) {
        std::vector<double> out(n);
        kernels::gemm_nn(g.data(), e, out, n, n, 1);
        return out;
    }
    throw DimensionError("act: embedding length " + std::to_string(e.size()) +
                         " incompatible with " + std::to_string(n) + "x" + std::to_string(n));
}

std::vector<double> vec(const DenseMatrix& g) { return g.values(); }

DenseMatrix mat(std::span<const double> v) {
    const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(v.size()))));
    if (n == 0 || n * n != v.size())
        throw InvalidInputError("mat: length " + std::to_string(v.size()) + " is not a perfect square");
    return DenseMatrix(n, n, std::vector<double>(v.begin(), v.end()));
}

namespace lie_graph {

DenseMatrix identity_rows(std::size_t batch, std::size_t side) {
    DenseMatrix out(batch, side * side);
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t i = 0; i < side; ++i) out(r, i * side + i) = 1.0;
    return out;
}

Var algebra(Graph& g, Var t, Var generators) { return g.matmul(t, generators); }

Var exp(Graph& g, Var a, std::size_t side) {
    const DenseMatrix& av = g.value(a);
    if (av.cols() != side * side)
        throw DimensionError("lie_graph::exp: rows of " + std::to_string(av.cols()) +
                             " entries for side " + std::to_string(side));
    int steps = 0;
    for (std::size_t r = 0; r < av.rows(); ++r) {
        double s = 0.0;
        for (double v : av.row(r)) s += v * v;
        steps = std::max(steps, exp_scaling_steps(std::sqrt(s)));
    }
    const Var x = g.scale(a, std::ldexp(1.0, -steps));
    Var term = g.constant(identity_rows(av.rows(), side));
    Var sum = term;
    for (int k = 1; k <= kExpTaylorOrder; ++k) {
        term = g.scale(g.batched_matmul(term, x, side), 1.0 / k);
        sum = g.add(sum, term);
    }
    for (int s = 0; s < steps; ++s) sum = g.batched_matmul(sum, sum, side);
    return sum;
}

}  // namespace lie_graph

}  // namespace lgvae
