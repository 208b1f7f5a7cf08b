// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/linalg.hpp"

#include "test_support.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

using namespace sra;
using sra::test::error_code_of;
using sra::test::random_mat;
using sra::test::random_unit;
using sra::test::random_vec;

namespace {

Eigen::MatrixXd to_eigen(const Mat & m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            e(r, c) = m(r, c);
        }
    }
    return e;
}

Eigen::VectorXd to_eigen(const Vec & v) { return Eigen::Map<const Eigen::VectorXd>(v.raw().data(), v.dim()); }

// (A^T A + lambda I)^-1 A^T r with a generic dense inverse.
Eigen::VectorXd normal_equations_oracle(const Mat & a, const Vec & r, double lambda) {
    const Eigen::MatrixXd ea = to_eigen(a);
    const Eigen::MatrixXd g = ea.transpose() * ea + lambda * Eigen::MatrixXd::Identity(a.cols(), a.cols());
    return g.inverse() * (ea.transpose() * to_eigen(r));
}

double objective(const Mat & a, const Vec & r, const Vec & w, double lambda) {
    const Vec res = r - matvec(a, w);
    return dot(res, res) + lambda * dot(w, w);
}

} // namespace

TEST_CASE("ridge_solve on orthonormal columns returns coordinates") {
    Mat a(3, 2);
    a(0, 0) = 1.0;
    a(1, 1) = 1.0;
    const Vec w = ridge_solve(a, Vec{2.0, 3.0, 5.0}, 0.0);
    REQUIRE(w.dim() == 2);
    CHECK(w[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("ridge_solve vanishes in the infinite-ridge limit") {
    std::mt19937_64 rng(7);
    const Mat a = random_mat(rng, 20, 5);
    const Vec r = random_vec(rng, 20);
    const Vec w = ridge_solve(a, r, 1e12);
    CHECK(max_abs(w.values()) < 1e-6);
}

TEST_CASE("ridge_solve matches the normal-equations oracle") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat a = random_mat(rng, 16, 4);
        const Vec r = random_vec(rng, 16);
        const Vec w = ridge_solve(a, r, 0.1);
        const Eigen::VectorXd oracle = normal_equations_oracle(a, r, 0.1);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(std::abs(w[k] - oracle(static_cast<Eigen::Index>(k))) <= 1e-10);
        }
    }
}

TEST_CASE("ridge_solve errors") {
    Mat a(4, 2);
    a(0, 0) = 1.0;
    a(1, 0) = 2.0;
    a(0, 1) = 2.0;
    a(1, 1) = 4.0;
    const Vec r{1.0, 1.0, 1.0, 1.0};
    CHECK(error_code_of([&] { ridge_solve(a, r, 0.0); }) == ErrorCode::SingularSystem);
    CHECK_NOTHROW(ridge_solve(a, r, 1e-3));
    CHECK(error_code_of([&] { ridge_solve(a, Vec{1.0, 2.0}, 0.1); }) == ErrorCode::DimensionMismatch);
    CHECK(error_code_of([&] { ridge_solve(a, r, -1.0); }) == ErrorCode::InvalidArgument);
    CHECK(error_code_of([&] { ridge_solve(a, Vec{1.0, std::nan(""), 0.0, 0.0}, 0.1); }) ==
          ErrorCode::NonFiniteInput);
    CHECK(is_numerical(ErrorCode::SingularSystem));
    CHECK_FALSE(is_numerical(ErrorCode::DimensionMismatch));
}

TEST_CASE("ridge_solve with an empty basis returns an empty vector") {
    const Mat a(5, 0);
    CHECK(ridge_solve(a, Vec(5, 1.0), 0.0).dim() == 0);
    const RegressionFit fit = residualize(Vec(5, 1.0), a, 0.0);
    CHECK(fit.residual == Vec(5, 1.0));
    CHECK(fit.r_squared == 0.0);
}

TEST_CASE("ridge optimality and normal-equations identity") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = trial < 5 ? 64 : 512;
        const std::size_t k = trial % 2 == 0 ? 8 : 32;
        const double lambda = trial % 3 == 0 ? 0.0 : 0.5;
        const Mat a = random_mat(rng, d, k);
        const Vec r = random_vec(rng, d);
        const Vec w = ridge_solve(a, r, lambda);

        const Vec atr = matvec_transposed(a, r);
        Vec lhs = matvec_transposed(a, matvec(a, w));
        for (std::size_t i = 0; i < k; ++i) {
            lhs[i] += lambda * w[i];
        }
        CHECK(max_abs((lhs - atr).values()) <= 1e-8 * (1.0 + max_abs(atr.values())));

        const double f0 = objective(a, r, w, lambda);
        for (int p = 0; p < 5; ++p) {
            const Vec delta = 1e-3 * random_unit(rng, k);
            CHECK(objective(a, r, w + delta, lambda) >= f0 - 1e-9);
        }
    }
}

TEST_CASE("ridge coefficients shrink monotonically in lambda") {
    std::mt19937_64 rng(17);
    const Mat a = random_mat(rng, 40, 6);
    const Vec r = random_vec(rng, 40);
    double prev = norm(ridge_solve(a, r, 0.0));
    for (double lambda : {1e-6, 1e-3, 0.1, 1.0, 10.0, 1e3}) {
        const double n = norm(ridge_solve(a, r, lambda));
        CHECK(n <= prev);
        prev = n;
    }
}

TEST_CASE("residualize special cases") {
    SUBCASE("orthogonal regressors explain nothing") {
        Mat a(4, 2);
        a(0, 0) = 1.0;
        a(1, 1) = 1.0;
        const Vec r{0.0, 0.0, 3.0, -1.0};
        for (double lambda : {0.0, 1e-6, 1.0}) {
            const RegressionFit fit = residualize(r, a, lambda);
            CHECK(fit.residual == r);
            CHECK(fit.r_squared == doctest::Approx(0.0));
        }
    }
    SUBCASE("in-span target") {
        std::mt19937_64 rng(3);
        const Mat a = random_mat(rng, 10, 3);
        const Vec r = matvec(a, Vec{0.5, -2.0, 1.5});
        const RegressionFit fit = residualize(r, a, 0.0);
        CHECK(norm(fit.residual) <= 1e-9 * norm(r));
        CHECK(fit.r_squared == doctest::Approx(1.0));
    }
    SUBCASE("entangled pair recovers the clean part") {
        std::mt19937_64 rng(5);
        const Vec s = random_unit(rng, 32);
        const Vec a = normalized(sra::test::orthogonalize(random_vec(rng, 32), s));
        const Vec r = s + 0.3 * a;
        const RegressionFit fit = residualize(r, Mat::from_columns(std::vector<Vec>{a}), 1e-6);
        CHECK(cosine(fit.residual, s) >= 0.999);
    }
    SUBCASE("zero target") {
        std::mt19937_64 rng(9);
        const RegressionFit fit = residualize(Vec(6), random_mat(rng, 6, 2), 0.1);
        CHECK(norm(fit.residual) == 0.0);
        CHECK(fit.r_squared == 0.0);
    }
}

TEST_CASE("r_squared is scale invariant at lambda zero") {
    std::mt19937_64 rng(19);
    const Mat a = random_mat(rng, 30, 4);
    const Vec r = random_vec(rng, 30);
    const double base = residualize(r, a, 0.0).r_squared;
    for (double c : {-3.0, 0.25, 8.0}) {
        CHECK(residualize(c * r, a, 0.0).r_squared == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("default_lambda is relative to the mean Gram diagonal") {
    Mat a(2, 2);
    a(0, 0) = 1.0;
    a(1, 0) = 1.0;
    a(0, 1) = 3.0;
    // diag(A^T A) = (2, 9)
    CHECK(default_lambda(a) == doctest::Approx(1e-3 * 5.5));
    CHECK(default_lambda(a, 0.5) == doctest::Approx(2.75));
}

TEST_CASE("cosine") {
    CHECK(cosine(Vec{1.0, 0.0}, Vec{0.0, 1.0}) == 0.0);
    const Vec u{0.3, -1.2, 2.5};
    CHECK(cosine(u, u) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(error_code_of([&] { cosine(u, Vec(3)); }) == ErrorCode::ZeroNorm);
    CHECK(error_code_of([&] { cosine(u, Vec{1.0, 2.0}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("orthogonality_map") {
    SUBCASE("orthogonal pair") {
        const std::vector<NamedVec> v = {{"a", Vec{1.0, 0.0}}, {"b", Vec{0.0, 1.0}}};
        const Mat m = orthogonality_map(v);
        CHECK(m == Mat(2, 2, {1.0, 0.0, 0.0, 1.0}));
    }
    SUBCASE("identical vectors") {
        const std::vector<NamedVec> v = {{"a", Vec{1.0, 2.0}}, {"b", Vec{1.0, 2.0}}, {"c", Vec{1.0, 2.0}}};
        const Mat m = orthogonality_map(v);
        for (double x : m.values()) {
            CHECK(x == doctest::Approx(1.0).epsilon(1e-15));
        }
    }
    SUBCASE("random vectors against a double loop") {
        std::mt19937_64 rng(23);
        std::vector<NamedVec> v;
        for (int i = 0; i < 5; ++i) {
            v.push_back({"v" + std::to_string(i), random_vec(rng, 12)});
        }
        const Mat m = orthogonality_map(v);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(m(i, i) == 1.0);
            for (std::size_t j = 0; j < 5; ++j) {
                double uv = 0.0;
                double uu = 0.0;
                double vv = 0.0;
                for (std::size_t k = 0; k < 12; ++k) {
                    uv += v[i].vec[k] * v[j].vec[k];
                    uu += v[i].vec[k] * v[i].vec[k];
                    vv += v[j].vec[k] * v[j].vec[k];
                }
                CHECK(std::abs(m(i, j) - uv / std::sqrt(uu * vv)) <= 1e-12);
                CHECK(m(i, j) == m(j, i));
            }
        }
    }
}

TEST_CASE("spectral_breakdown") {
    SUBCASE("scaled atom") {
        const std::vector<NamedVec> atoms = {{"a1", Vec{1.0, 0.0, 0.0}}, {"a2", Vec{0.0, 1.0, 0.0}}};
        const auto b = spectral_breakdown(Vec{2.0, 0.0, 0.0}, atoms, 0.0);
        REQUIRE(b.size() == 2);
        CHECK(b[0].first == "a1");
        CHECK(b[0].second == doctest::Approx(2.0));
        CHECK(b[1].first == "a2");
        CHECK(std::abs(b[1].second) <= 1e-15);
    }
    SUBCASE("orthogonal target") {
        const std::vector<NamedVec> atoms = {{"a1", Vec{1.0, 1.0, 0.0}}, {"a2", Vec{1.0, -1.0, 0.0}}};
        for (const auto & [name, c] : spectral_breakdown(Vec{0.0, 0.0, 4.0}, atoms, 0.0)) {
            CHECK(std::abs(c) <= 1e-9);
        }
    }
    SUBCASE("identity with ridge_solve") {
        std::mt19937_64 rng(29);
        std::vector<NamedVec> atoms;
        std::vector<Vec> cols;
        for (int i = 0; i < 6; ++i) {
            cols.push_back(random_vec(rng, 64));
            atoms.push_back({"k" + std::to_string(i), cols.back()});
        }
        const Vec r = random_vec(rng, 64);
        const auto b = spectral_breakdown(r, atoms, 0.05);
        const Vec w = ridge_solve(Mat::from_columns(cols), r, 0.05);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(b[i].second == w[i]);
        }
    }
}

TEST_CASE("exact_sum is order independent and correctly rounded") {
    std::vector<double> v = {1e16, 1.0, -1e16, 1.0, 1e-3};
    CHECK(exact_sum(v) == 2.001);
    std::mt19937_64 rng(31);
    std::vector<double> w(1000);
    std::normal_distribution<double> n(0.0, 1e6);
    for (double & x : w) {
        x = n(rng);
    }
    const double s = exact_sum(w);
    std::shuffle(w.begin(), w.end(), rng);
    CHECK(exact_sum(w) == s);
    std::reverse(w.begin(), w.end());
    CHECK(exact_sum(w) == s);
}

TEST_CASE("matrix construction and finiteness") {
    CHECK(error_code_of([] { Mat(2, 2, std::vector<double>{1.0, 2.0}); }) == ErrorCode::DimensionMismatch);
    const Mat m = Mat::from_columns(std::vector<Vec>{Vec{1.0, 2.0}, Vec{3.0, 4.0}});
    CHECK(m(0, 1) == 3.0);
    CHECK(m.column(1) == Vec{3.0, 4.0});
    CHECK(m.row_vec(1) == Vec{2.0, 4.0});
    CHECK(Vec{1.0, std::numeric_limits<double>::infinity()}.all_finite() == false);
    CHECK(error_code_of([] { normalized(Vec(3)); }) == ErrorCode::ZeroNorm);
}
