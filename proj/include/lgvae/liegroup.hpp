#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lgvae/gradcore.hpp"
#include "lgvae/matcore.hpp"

namespace lgvae {

/// The d trainable Lie-algebra generators, each n×n. Stored as one d×n²
/// matrix whose row k is generator k flattened row-major, which is also the
/// layout bound into the gradient engine.
class GeneratorBank {
public:
    GeneratorBank(std::size_t n, DenseMatrix rows);

    std::size_t dims() const noexcept { return rows_.rows(); }
    std::size_t side() const noexcept { return side_; }
    DenseMatrix generator(std::size_t k) const;
    const DenseMatrix& rows() const noexcept { return rows_; }

private:
    std::size_t side_;
    DenseMatrix rows_;
};

/// Entries i.i.d. N(0, scale²) from a seeded mt19937_64. scale = 0 gives the
/// zero bank. Throws InvalidInputError for d < 2, n < 2 or scale < 0.
GeneratorBank init_generators(std::size_t d, std::size_t n, double scale, std::uint64_t seed);

/// Σ_j t_j A_j.
DenseMatrix assemble_algebra(const GeneratorBank& bank, std::span<const double> t);

/// exp(Σ_j t_j A_j).
DenseMatrix group_element(const GeneratorBank& bank, std::span<const double> t);

/// Group action on an embedding. A length-n² embedding is read as a row-major
/// n×n matrix E and mapped to vec(g·E); a length-n vector gets g·e.
std::vector<double> act(const DenseMatrix& g, std::span<const double> e);

std::vector<double> vec(const DenseMatrix& g);
/// Inverse of vec; throws InvalidInputError when |v| is not a perfect square.
DenseMatrix mat(std::span<const double> v);

/// Differentiable counterparts. Batches are one sample per row; every
/// side×side matrix is a flattened row.
namespace lie_graph {

/// t[B×d] · generators[d×n²] → A(t) per row.
Var algebra(Graph& g, Var t, Var generators);

/// Row-wise matrix exponential with the same scaling-and-squaring Taylor
/// composition as mat_exp. The number of squarings is fixed when the node is
/// recorded, using the largest row norm of the batch.
Var exp(Graph& g, Var a, std::size_t side);

/// Constant B×n² matrix whose rows are the flattened identity.
DenseMatrix identity_rows(std::size_t batch, std::size_t side);

}  // namespace lie_graph

}  // namespace lgvae
