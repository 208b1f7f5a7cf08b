// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Dense double-precision kernels shared by every other module: ridge
// regression against a small column basis, residualization, cosine maps.
//
// Everything here is a pure function over value types and is safe to call
// concurrently.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sra {

class Vec {
public:
    Vec() = default;
    explicit Vec(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    explicit Vec(std::vector<double> values) : data_(std::move(values)) {}
    Vec(std::initializer_list<double> values) : data_(values) {}

    std::size_t dim() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double   operator[](std::size_t i) const { return data_[i]; }
    double & operator[](std::size_t i) { return data_[i]; }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double>       values() noexcept { return data_; }
    const std::vector<double> & raw() const noexcept { return data_; }

    bool all_finite() const noexcept;

    bool operator==(const Vec &) const = default;

private:
    std::vector<double> data_;
};

// Row-major dense matrix. A matrix with zero columns is allowed and stands
// for an empty regression basis.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Mat(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Mat from_columns(std::span<const Vec> columns);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double   operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double & operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double>       row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    Vec column(std::size_t c) const;
    Vec row_vec(std::size_t r) const;

    std::span<const double> values() const noexcept { return data_; }
    std::span<double>       values() noexcept { return data_; }

    bool all_finite() const noexcept;

    bool operator==(const Mat &) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double dot(const Vec & a, const Vec & b);
double norm(const Vec & v);
double max_abs(std::span<const double> v);

Vec operator+(const Vec & a, const Vec & b);
Vec operator-(const Vec & a, const Vec & b);
Vec operator*(double s, const Vec & v);

// Throws ZeroNorm for a zero vector.
Vec normalized(const Vec & v);

Vec matvec(const Mat & a, const Vec & x);          // A x
Vec matvec_transposed(const Mat & a, const Vec & x); // A^T x

// Correctly rounded sum of the inputs (Shewchuk partials). The result does
// not depend on the order of the inputs.
double exact_sum(std::span<const double> values);

struct RegressionFit {
    Vec coefficients;
    Vec residual;
    double r_squared = 0.0;
    double lambda = 0.0;
    // Set when the raw R^2 came out negative and was clamped to zero.
    bool r_squared_clamped = false;
};

// Minimizes ||r - A w||^2 + lambda ||w||^2 through a Cholesky factorization
// of the K x K normal equations (A^T A + lambda I) w = A^T r.
//
// Errors: DimensionMismatch, InvalidArgument (lambda < 0), NonFiniteInput,
// SingularSystem (A^T A + lambda I not numerically positive definite).
Vec ridge_solve(const Mat & a, const Vec & r, double lambda);

// residual = r - A ridge_solve(A, r, lambda), R^2 = 1 - |residual|^2 / |r|^2
// clamped to [0, 1]. A zero r yields a zero residual with R^2 = 0.
RegressionFit residualize(const Vec & r, const Mat & a, double lambda);

// relative * mean(diag(A^T A)); the default ridge strength.
double default_lambda(const Mat & a, double relative = 1e-3);

// Errors: DimensionMismatch, ZeroNorm.
double cosine(const Vec & u, const Vec & v);

struct NamedVec {
    std::string name;
    Vec vec;
};

// Symmetric matrix of pairwise cosines with a unit diagonal.
Mat orthogonality_map(std::span<const NamedVec> vectors);

// Ridge coefficients of r on the atoms taken as columns, paired with the atom
// names in input order. Atoms are used as given (no normalization).
std::vector<std::pair<std::string, double>> spectral_breakdown(const Vec & r, std::span<const NamedVec> atoms,
                                                               double lambda);

} // namespace sra
