// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/linalg.hpp"

#include "sra/error.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace sra {

bool Vec::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
        fail(ErrorCode::DimensionMismatch,
             fmt::format("matrix {}x{} needs {} values, got {}", rows_, cols_, rows_ * cols_, data_.size()));
    }
}

Mat Mat::from_columns(std::span<const Vec> columns) {
    if (columns.empty()) {
        return {};
    }
    const std::size_t d = columns.front().dim();
    Mat m(d, columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].dim() != d) {
            fail(ErrorCode::DimensionMismatch,
                 fmt::format("column {} has dim {}, expected {}", c, columns[c].dim(), d));
        }
        for (std::size_t r = 0; r < d; ++r) {
            m(r, c) = columns[c][r];
        }
    }
    return m;
}

Vec Mat::column(std::size_t c) const {
    Vec v(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        v[r] = (*this)(r, c);
    }
    return v;
}

Vec Mat::row_vec(std::size_t r) const {
    auto s = row(r);
    return Vec(std::vector<double>(s.begin(), s.end()));
}

bool Mat::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double dot(const Vec & a, const Vec & b) {
    if (a.dim() != b.dim()) {
        fail(ErrorCode::DimensionMismatch, fmt::format("dot of dims {} and {}", a.dim(), b.dim()));
    }
    return dot(a.values(), b.values());
}

double norm(const Vec & v) {
    return std::sqrt(dot(v.values(), v.values()));
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

Vec operator+(const Vec & a, const Vec & b) {
    if (a.dim() != b.dim()) {
        fail(ErrorCode::DimensionMismatch, fmt::format("add of dims {} and {}", a.dim(), b.dim()));
    }
    Vec out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) {
        out[i] = a[i] + b[i];
    }
    return out;
}

Vec operator-(const Vec & a, const Vec & b) {
    if (a.dim() != b.dim()) {
        fail(ErrorCode::DimensionMismatch, fmt::format("subtract of dims {} and {}", a.dim(), b.dim()));
    }
    Vec out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) {
        out[i] = a[i] - b[i];
    }
    return out;
}

Vec operator*(double s, const Vec & v) {
    Vec out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) {
        out[i] = s * v[i];
    }
    return out;
}

Vec normalized(const Vec & v) {
    const double n = norm(v);
    if (!(n > 0.0)) {
        fail(ErrorCode::ZeroNorm, "cannot normalize a zero vector");
    }
    return (1.0 / n) * v;
}

Vec matvec(const Mat & a, const Vec & x) {
    if (a.cols() != x.dim()) {
        fail(ErrorCode::DimensionMismatch, fmt::format("matvec {}x{} by dim {}", a.rows(), a.cols(), x.dim()));
    }
    Vec out(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        out[r] = dot(a.row(r), x.values());
    }
    return out;
}

Vec matvec_transposed(const Mat & a, const Vec & x) {
    if (a.rows() != x.dim()) {
        fail(ErrorCode::DimensionMismatch,
             fmt::format("transposed matvec {}x{} by dim {}", a.rows(), a.cols(), x.dim()));
    }
    Vec out(a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double xr = x[r];
        auto row = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) {
            out[c] += row[c] * xr;
        }
    }
    return out;
}

double exact_sum(std::span<const double> values) {
    std::vector<double> partials;
    for (double x : values) {
        std::size_t i = 0;
        for (double y : partials) {
            if (std::abs(x) < std::abs(y)) {
                std::swap(x, y);
            }
            const double hi = x + y;
            const double lo = y - (hi - x);
            if (lo != 0.0) {
                partials[i++] = lo;
            }
            x = hi;
        }
        partials.resize(i);
        partials.push_back(x);
    }

    // Round the partials to the nearest double, half-even on the final tie.
    std::size_t n = partials.size();
    if (n == 0) {
        return 0.0;
    }
    double hi = partials[--n];
    double lo = 0.0;
    while (n > 0) {
        const double x = hi;
        const double y = partials[--n];
        hi = x + y;
        const double yr = hi - x;
        lo = y - yr;
        if (lo != 0.0) {
            break;
        }
    }
    if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
        const double y = lo * 2.0;
        const double x = hi + y;
        const double yr = x - hi;
        if (y == yr) {
            hi = x;
        }
    }
    return hi;
}

namespace {

void check_regression_inputs(const Mat & a, const Vec & r, double lambda) {
    if (a.rows() != r.dim()) {
        fail(ErrorCode::DimensionMismatch,
             fmt::format("regressor matrix has {} rows but target has dim {}", a.rows(), r.dim()));
    }
    if (!std::isfinite(lambda) || !a.all_finite() || !r.all_finite()) {
        fail(ErrorCode::NonFiniteInput, "ridge inputs contain NaN or Inf");
    }
    if (lambda < 0.0) {
        fail(ErrorCode::InvalidArgument, fmt::format("ridge lambda must be >= 0, got {}", lambda));
    }
}

} // namespace

Vec ridge_solve(const Mat & a, const Vec & r, double lambda) {
    check_regression_inputs(a, r, lambda);
    const std::size_t d = a.rows();
    const std::size_t k = a.cols();
    if (k == 0) {
        return {};
    }

    // Normal equations G = A^T A + lambda I (lower triangle), b = A^T r.
    std::vector<double> g(k * k, 0.0);
    std::vector<double> b(k, 0.0);
    for (std::size_t row = 0; row < d; ++row) {
        auto ar = a.row(row);
        const double rr = r[row];
        for (std::size_t i = 0; i < k; ++i) {
            const double ai = ar[i];
            b[i] += ai * rr;
            double * gi = g.data() + i * k;
            for (std::size_t j = 0; j <= i; ++j) {
                gi[j] += ai * ar[j];
            }
        }
    }
    double max_diag = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        g[i * k + i] += lambda;
        max_diag = std::max(max_diag, g[i * k + i]);
    }

    // In-place Cholesky G = L L^T.
    const double tol = 1e-12 * std::max(max_diag, 1e-300);
    for (std::size_t j = 0; j < k; ++j) {
        double pivot = g[j * k + j];
        for (std::size_t p = 0; p < j; ++p) {
            pivot -= g[j * k + p] * g[j * k + p];
        }
        if (!(pivot > tol)) {
            fail(ErrorCode::SingularSystem,
                 fmt::format("normal equations not positive definite at column {} (pivot {:.3e}, lambda {})", j,
                             pivot, lambda));
        }
        const double ljj = std::sqrt(pivot);
        g[j * k + j] = ljj;
        for (std::size_t i = j + 1; i < k; ++i) {
            double s = g[i * k + j];
            for (std::size_t p = 0; p < j; ++p) {
                s -= g[i * k + p] * g[j * k + p];
            }
            g[i * k + j] = s / ljj;
        }
    }

    // Forward then backward substitution.
    Vec w(k);
    for (std::size_t i = 0; i < k; ++i) {
        double s = b[i];
        for (std::size_t p = 0; p < i; ++p) {
            s -= g[i * k + p] * w[p];
        }
        w[i] = s / g[i * k + i];
    }
    for (std::size_t ii = k; ii-- > 0;) {
        double s = w[ii];
        for (std::size_t p = ii + 1; p < k; ++p) {
            s -= g[p * k + ii] * w[p];
        }
        w[ii] = s / g[ii * k + ii];
    }
    return w;
}

RegressionFit residualize(const Vec & r, const Mat & a, double lambda) {
    RegressionFit fit;
    fit.lambda = lambda;
    fit.coefficients = ridge_solve(a, r, lambda);

    fit.residual = r;
    for (std::size_t row = 0; row < a.rows(); ++row) {
        fit.residual[row] -= dot(a.row(row), fit.coefficients.values());
    }

    const double rr = dot(r, r);
    if (rr == 0.0) {
        fit.r_squared = 0.0;
        return fit;
    }
    const double raw = 1.0 - dot(fit.residual, fit.residual) / rr;
    if (raw < 0.0) {
        fit.r_squared_clamped = true;
    }
    fit.r_squared = std::clamp(raw, 0.0, 1.0);
    return fit;
}

double default_lambda(const Mat & a, double relative) {
    if (a.cols() == 0) {
        return 0.0;
    }
    double trace = 0.0;
    for (double x : a.values()) {
        trace += x * x;
    }
    return relative * trace / static_cast<double>(a.cols());
}

double cosine(const Vec & u, const Vec & v) {
    if (u.dim() != v.dim()) {
        fail(ErrorCode::DimensionMismatch, fmt::format("cosine of dims {} and {}", u.dim(), v.dim()));
    }
    const double nu = norm(u);
    const double nv = norm(v);
    if (!(nu > 0.0) || !(nv > 0.0)) {
        fail(ErrorCode::ZeroNorm, "cosine of a zero vector");
    }
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Mat orthogonality_map(std::span<const NamedVec> vectors) {
    const std::size_t n = vectors.size();
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(norm(vectors[i].vec) > 0.0)) {
            fail(ErrorCode::ZeroNorm, fmt::format("vector '{}' has zero norm", vectors[i].name));
        }
        m(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c = cosine(vectors[i].vec, vectors[j].vec);
            m(i, j) = c;
            m(j, i) = c;
        }
    }
    return m;
}

std::vector<std::pair<std::string, double>> spectral_breakdown(const Vec & r, std::span<const NamedVec> atoms,
                                                               double lambda) {
    std::vector<Vec> cols;
    cols.reserve(atoms.size());
    for (const auto & atom : atoms) {
        cols.push_back(atom.vec);
    }
    const Mat a = atoms.empty() ? Mat(r.dim(), 0) : Mat::from_columns(cols);
    const Vec w = ridge_solve(a, r, lambda);

    std::vector<std::pair<std::string, double>> out;
    out.reserve(atoms.size());
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        out.emplace_back(atoms[i].name, w[i]);
    }
    return out;
}

} // namespace sra
