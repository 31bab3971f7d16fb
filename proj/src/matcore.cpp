#include "lgvae/matcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lgvae/errors.hpp"
#include "lgvae/kernels.hpp"

namespace lgvae {

namespace {

std::string shape_str(const DenseMatrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape " + shape_str(a) + " vs " + shape_str(b));
}

void require_finite(const DenseMatrix& m, const char* op) {
    if (!m.all_finite()) throw InvalidInputError(std::string(op) + ": non-finite entry");
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw DimensionError("DenseMatrix: " + std::to_string(data_.size()) +
                             " values for shape " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    require_finite(*this, "DenseMatrix");
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("DenseMatrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
    require_finite(*this, "DenseMatrix");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::filled(std::size_t rows, std::size_t cols, double value) {
    DenseMatrix m(rows, cols);
    std::fill(m.data_.begin(), m.data_.end(), value);
    return m;
}

DenseMatrix DenseMatrix::row_vector(std::span<const double> values) {
    return DenseMatrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

bool DenseMatrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix DenseMatrix::reshaped(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data_.size())
        throw DimensionError("reshape: " + shape_str(*this) + " to " + std::to_string(rows) +
                             "x" + std::to_string(cols));
    DenseMatrix out;
    out.rows_ = rows;
    out.cols_ = cols;
    out.data_ = data_;
    return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: " + shape_str(a) + " times " + shape_str(b));
    DenseMatrix c(a.rows(), b.cols());
    kernels::gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    return c;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    require_same_shape(a, b, "add");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
    require_same_shape(a, b, "sub");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
    return c;
}

DenseMatrix scale(const DenseMatrix& a, double s) {
    DenseMatrix c = a;
    for (double& v : c.data()) v *= s;
    return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

double frobenius_norm(const DenseMatrix& m) {
    require_finite(m, "frobenius_norm");
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

DenseMatrix commutator(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.is_square() || !a.same_shape(b))
        throw DimensionError("commutator: needs equal square shapes, got " + shape_str(a) +
                             " and " + shape_str(b));
    return sub(matmul(a, b), matmul(b, a));
}

int exp_scaling_steps(double frob_norm) {
    int s = 0;
    double scaled = frob_norm;
    while (scaled > 0.5) {
        scaled *= 0.5;
        ++s;
    }
    return s;
}

DenseMatrix mat_exp(const DenseMatrix& a) {
    if (!a.is_square()) throw DimensionError("mat_exp: non-square " + shape_str(a));
    const int steps = exp_scaling_steps(frobenius_norm(a));
    const DenseMatrix x = scale(a, std::ldexp(1.0, -steps));

    DenseMatrix term = DenseMatrix::identity(a.rows());
    DenseMatrix sum = term;
    for (int k = 1; k <= kExpTaylorOrder; ++k) {
        term = scale(matmul(term, x), 1.0 / k);
        sum = add(sum, term);
    }
    for (int s = 0; s < steps; ++s) sum = matmul(sum, sum);
    return sum;
}

double two_column_sigma_max(std::span<const double> c1, std::span<const double> c2) {
    if (c1.size() != c2.size() || c1.empty())
        throw DimensionError("two_column_sigma_max: column lengths " +
                             std::to_string(c1.size()) + " and " + std::to_string(c2.size()));
    double g11 = 0.0, g12 = 0.0, g22 = 0.0;
    for (std::size_t k = 0; k < c1.size(); ++k) {
        g11 += c1[k] * c1[k];
        g12 += c1[k] * c2[k];
        g22 += c2[k] * c2[k];
    }
    const double half_trace = 0.5 * (g11 + g22);
    const double half_gap = 0.5 * (g11 - g22);
    const double lambda_max = half_trace + std::hypot(half_gap, g12);
    return std::sqrt(std::max(lambda_max, 0.0));
}

double percentile(std::span<const double> values, double p) {
    if (values.empty()) throw InvalidInputError("percentile: empty list");
    if (!(p >= 0.0 && p <= 100.0))
        throw InvalidInputError("percentile: p=" + std::to_string(p) + " outside [0,100]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double index = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(index));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = index - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace lgvae
