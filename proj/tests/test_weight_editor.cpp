// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/tensor_file.hpp"
#include "sra/weight_editor.hpp"
#include "sra/toy_model.hpp"

#include "test_support.hpp"

#include <Eigen/Dense>

#include <random>

using namespace sra;
using sra::test::error_code_of;
using sra::test::random_mat;
using sra::test::random_unit;
using sra::test::random_vec;

namespace {

double frobenius(const Mat & m) { return std::sqrt(dot(m.values(), m.values())); }

ToyConfig small_config() {
    ToyConfig c;
    c.n_layers = 2;
    c.d_model = 16;
    c.n_heads = 2;
    c.ff_dim = 32;
    c.max_seq = 32;
    c.seed = 3;
    return c;
}

} // namespace

TEST_CASE("rank_one_update matches the dense projector") {
    std::mt19937_64 rng(1);
    const Mat w = random_mat(rng, 8, 8);
    const Vec v = random_unit(rng, 8);
    const Mat out = rank_one_update(w, v, 0.5);

    const Vec before = matvec_transposed(w, v);
    const Vec after = matvec_transposed(out, v);
    for (std::size_t c = 0; c < 8; ++c) {
        CHECK(std::abs(after[c] - 0.5 * before[c]) <= 1e-12);
    }

    const Eigen::VectorXd ev = Eigen::Map<const Eigen::VectorXd>(v.raw().data(), 8);
    const Eigen::MatrixXd ew = Eigen::Map<const Eigen::Matrix<double, 8, 8, Eigen::RowMajor>>(w.values().data());
    const Eigen::MatrixXd oracle = (Eigen::MatrixXd::Identity(8, 8) - 0.5 * ev * ev.transpose()) * ew;
    for (std::size_t r = 0; r < 8; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
            CHECK(std::abs(out(r, c) - oracle(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))) <= 1e-12);
        }
    }
}

TEST_CASE("rank_one_update edge cases") {
    std::mt19937_64 rng(2);
    const Mat w = random_mat(rng, 6, 4);
    const Vec v = random_unit(rng, 6);
    CHECK(rank_one_update(w, v, 0.0) == w);

    const Mat full = rank_one_update(w, v, 1.0);
    CHECK(max_abs(matvec_transposed(full, v).values()) <= 1e-12 * max_abs(w.values()));
    CHECK(sra::test::max_abs_diff(rank_one_update(full, v, 1.0), full) <= 1e-12);

    for (double g : {0.1, 0.5, 0.9, 1.0}) {
        CHECK(frobenius(rank_one_update(w, v, g)) <= frobenius(w) + 1e-12);
    }

    CHECK(error_code_of([&] { rank_one_update(w, 2.0 * v, 0.5); }) == ErrorCode::NotUnitVector);
    CHECK(error_code_of([&] { rank_one_update(w, random_unit(rng, 4), 0.5); }) == ErrorCode::DimensionMismatch);
    CHECK(error_code_of([&] { rank_one_update(w, v, 1.5); }) == ErrorCode::InvalidArgument);
    CHECK(error_code_of([&] { rank_one_update(w, v, -0.1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("rank_one_update preserves outputs orthogonal to v") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat w = random_mat(rng, 10, 10);
        const Vec v = random_unit(rng, 10);
        const Mat out = rank_one_update(w, v, 0.7);
        // x chosen so that v^T W x = 0.
        const Vec wtv = matvec_transposed(w, v);
        const Vec x = sra::test::orthogonalize(random_vec(rng, 10), wtv);
        const Vec wx = matvec(w, x);
        CHECK(max_abs((matvec(out, x) - wx).values()) <= 1e-12 * max_abs(wx.values()));
    }
}

TEST_CASE("apply_edit_plan") {
    const WeightSet w = seed_model(small_config());

    SUBCASE("empty plan") {
        CHECK(apply_edit_plan(w, EditPlan{}) == w);
    }
    SUBCASE("sequential edits compose") {
        std::mt19937_64 rng(4);
        const Vec v = random_unit(rng, 16);
        const std::string id = layer_weight_id(1, "mlp_down");
        EditPlan two;
        two.entries.push_back({1, id, v, 0.3});
        two.entries.push_back({1, id, v, 0.6});
        EditPlan one;
        one.entries.push_back({1, id, v, 1.0 - (1.0 - 0.3) * (1.0 - 0.6)});
        const WeightSet a = apply_edit_plan(w, two);
        const WeightSet b = apply_edit_plan(w, one);
        CHECK(sra::test::max_abs_diff(a.at(id), b.at(id)) <= 1e-10);
    }
    SUBCASE("untouched tensors are byte identical") {
        std::mt19937_64 rng(5);
        EditPlan plan;
        for (int l = 0; l < 2; ++l) {
            plan.entries.push_back({l, layer_weight_id(l, "mlp_down"), random_unit(rng, 16), 0.8});
        }
        const WeightSet out = apply_edit_plan(w, plan);
        for (const auto & [id, m] : w.tensors) {
            if (id.find("mlp_down") == std::string::npos) {
                CHECK(out.at(id) == m);
            } else {
                CHECK_FALSE(out.at(id) == m);
            }
        }
    }
    SUBCASE("validation") {
        std::mt19937_64 rng(6);
        EditPlan unknown;
        unknown.entries.push_back({0, "layer.0.nope", random_unit(rng, 16), 0.5});
        CHECK(error_code_of([&] { apply_edit_plan(w, unknown); }) == ErrorCode::UnknownWeightId);
        EditPlan vector_target;
        vector_target.entries.push_back({0, "layer.0.mlp_up_bias", random_unit(rng, 1), 0.5});
        CHECK(error_code_of([&] { apply_edit_plan(w, vector_target); }) == ErrorCode::ShapeMismatch);
        EditPlan wrong_dim;
        wrong_dim.entries.push_back({0, layer_weight_id(0, "attn_out"), random_unit(rng, 8), 0.5});
        CHECK(error_code_of([&] { apply_edit_plan(w, wrong_dim); }) == ErrorCode::DimensionMismatch);
    }
}

TEST_CASE("weights round trip through the container") {
    const WeightSet w = seed_model(small_config());
    const auto dir = sra::test::scratch_dir("weights");
    write_weights(w, dir / "w.wts");
    const WeightSet back = read_weights(dir / "w.wts");
    CHECK(back == w);
    CHECK(back.vectors.count("final_norm") == 1);
    write_weights(back, dir / "w2.wts");
    CHECK(read_file_bytes(dir / "w.wts") == read_file_bytes(dir / "w2.wts"));
    CHECK(encode_weights(w) == read_file_bytes(dir / "w.wts"));
}

TEST_CASE("semantic_energy_gamma") {
    CHECK(semantic_energy_gamma(Vec{2.0, 0.0}, 1.0, 1.0).gamma == 1.0);
    CHECK(semantic_energy_gamma(Vec{0.3, 0.4}, 1.0, 1.0).gamma == doctest::Approx(0.5));
    CHECK(semantic_energy_gamma(Vec{0.3, 0.4}, 4.0, 0.9).gamma == 0.9);
    const GammaChoice zero = semantic_energy_gamma(Vec(4), 1.0, 1.0);
    CHECK(zero.gamma == 0.0);
    CHECK(zero.degenerate);
    CHECK(error_code_of([] { semantic_energy_gamma(1.0, 0.0, 1.0); }) == ErrorCode::InvalidArgument);
    CHECK(error_code_of([] { semantic_energy_gamma(1.0, 1.0, 1.5); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("calibrate_gamma_scale hits the requested median") {
    const std::vector<double> norms = {4.0, 1.0, 0.0, 2.0, 8.0, 3.0};
    const double c = calibrate_gamma_scale(norms, 0.8);
    std::vector<double> gammas;
    for (double n : norms) {
        if (n > 0.0) {
            gammas.push_back(c * n);
        }
    }
    std::sort(gammas.begin(), gammas.end());
    CHECK(gammas[2] == doctest::Approx(0.8));
    CHECK(error_code_of([] { calibrate_gamma_scale(std::vector<double>{0.0, 0.0}, 0.8); }) == ErrorCode::ZeroNorm);

    const std::vector<double> even = {1.0, 2.0, 3.0, 4.0};
    CHECK(calibrate_gamma_scale(even, 0.5) == doctest::Approx(0.5 / 2.5));
}

TEST_CASE("predict_capability_drift") {
    std::mt19937_64 rng(7);
    const Vec g = random_vec(rng, 12);
    const Vec v = normalized(sra::test::orthogonalize(random_vec(rng, 12), g));
    CHECK(std::abs(predict_capability_drift(v, g, 0.5)) <= 1e-12);
    CHECK(predict_capability_drift(random_unit(rng, 12), g, 0.0) == 0.0);
    const Vec u = random_unit(rng, 12);
    CHECK(predict_capability_drift(u, g, 0.25) == doctest::Approx(-0.25 * dot(u, g)));
    CHECK(error_code_of([&] { predict_capability_drift(u, Vec(3), 0.1); }) == ErrorCode::DimensionMismatch);
}
