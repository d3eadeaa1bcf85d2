#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace qamo {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }

    void set_row(std::size_t r, std::span<const double> values);

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
bool all_finite(std::span<const double> v);

// Throws ZeroNorm when the norm is below 1e-30.
Vec unit_normalize(std::span<const double> v);

// Dot product of two unit vectors, clamped to [-1, 1].
double cosine(std::span<const double> a, std::span<const double> b);

// log(1 + e^z) evaluated as max(z, 0) + log1p(e^-|z|).
double softplus(double z);
double sigmoid(double z);
double log_sum_exp(std::span<const double> v);

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences (f(x + h e_j) - f(x - h e_j)) / 2h for every component.
Vec finite_diff_grad(const ScalarFn& f, std::span<const double> x, double h = 1e-5);

// ||a - b|| / max(||a||, ||b||, floor). The floor keeps the ratio meaningful
// when both gradients are essentially zero.
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8);

}  // namespace qamo
