#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace lgvae {

/// Row-major matrix of 64-bit reals. Also serves as the 2-d array type of the
/// gradient engine, where a batch is laid out one sample per row.
class DenseMatrix {
public:
    DenseMatrix() = default;
    /// Zero-filled rows×cols matrix.
    DenseMatrix(std::size_t rows, std::size_t cols);
    /// Takes ownership of row-major data; throws DimensionError when the length
    /// is not rows×cols and InvalidInputError on any non-finite entry.
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix filled(std::size_t rows, std::size_t cols, double value);
    static DenseMatrix row_vector(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool is_square() const noexcept { return rows_ == cols_; }
    bool same_shape(const DenseMatrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool all_finite() const noexcept;

    /// Same data under a new shape; throws DimensionError if the size differs.
    DenseMatrix reshaped(std::size_t rows, std::size_t cols) const;

    bool operator==(const DenseMatrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double s);
DenseMatrix transpose(const DenseMatrix& a);

double frobenius_norm(const DenseMatrix& m);

/// ab − ba for square matrices of equal shape.
DenseMatrix commutator(const DenseMatrix& a, const DenseMatrix& b);

/// Number of halvings used by mat_exp: the smallest s ≥ 0 with
/// frob_norm / 2^s ≤ 0.5.
int exp_scaling_steps(double frob_norm);

/// Degree of the truncated Taylor series used by mat_exp.
inline constexpr int kExpTaylorOrder = 12;

/// Matrix exponential by scaling and squaring around a degree-12 Taylor
/// polynomial. Only sums, scalings and products are involved, so the same
/// composition can be unrolled into the gradient engine (see liegroup).
DenseMatrix mat_exp(const DenseMatrix& a);

/// Largest singular value of the n×2 matrix [c1 c2], via the closed-form
/// larger eigenvalue of its 2×2 Gram matrix.
double two_column_sigma_max(std::span<const double> c1, std::span<const double> c2);

/// Linear interpolation between closest ranks: index = p/100·(n−1) on the
/// sorted values.
double percentile(std::span<const double> values, double p);

}  // namespace lgvae
