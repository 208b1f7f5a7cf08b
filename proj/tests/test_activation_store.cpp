// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/activation_store.hpp"
#include "sra/tensor_file.hpp"
#include "sra/toy_model.hpp"

#include "test_support.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstring>
#include <random>

using namespace sra;
using sra::test::error_code_of;

namespace {

ActivationDump make_dump(std::mt19937_64 & rng, std::vector<int> layers, std::size_t prompts, std::size_t dim) {
    ActivationDump d;
    d.model_id = "unit";
    d.prompt_set_id = "set";
    d.hidden_dim = dim;
    d.num_prompts = prompts;
    for (int l : layers) {
        Mat m = sra::test::random_mat(rng, prompts, dim);
        // Round through float so the in-memory copy equals what the file holds.
        for (double & x : m.values()) {
            x = static_cast<float>(x);
        }
        d.layers.emplace(l, std::move(m));
    }
    return d;
}

std::vector<std::uint8_t> raw_container(const nlohmann::json & manifest, std::size_t payload_floats) {
    const std::string text = manifest.dump();
    std::vector<std::uint8_t> out = {'S', 'R', 'A', 'A', 'C', 'T', '0', '1'};
    std::uint64_t len = text.size();
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    }
    out.insert(out.end(), text.begin(), text.end());
    out.resize(out.size() + 4 * payload_floats, 0);
    return out;
}

} // namespace

TEST_CASE("mean_activation") {
    ActivationDump d;
    d.prompt_set_id = "p";
    d.hidden_dim = 3;

    SUBCASE("single prompt") {
        d.num_prompts = 1;
        d.layers.emplace(2, Mat(1, 3, {1.5, -2.0, 0.25}));
        CHECK(mean_activation(d, 2) == Vec{1.5, -2.0, 0.25});
    }
    SUBCASE("opposite prompts cancel") {
        d.num_prompts = 2;
        d.layers.emplace(2, Mat(2, 3, {1.5, -2.0, 0.25, -1.5, 2.0, -0.25}));
        CHECK(mean_activation(d, 2) == Vec(3));
    }
    SUBCASE("ten prompts against an accumulation loop") {
        std::mt19937_64 rng(1);
        d = make_dump(rng, {0}, 10, 7);
        const Vec m = mean_activation(d, 0);
        for (std::size_t j = 0; j < 7; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < 10; ++p) {
                s += d.layers.at(0)(p, j);
            }
            CHECK(std::abs(m[j] - s / 10.0) <= 1e-12);
        }
    }
    SUBCASE("errors") {
        d.num_prompts = 0;
        d.layers.emplace(1, Mat(0, 3));
        CHECK(error_code_of([&] { mean_activation(d, 1); }) == ErrorCode::EmptyDump);
        CHECK(error_code_of([&] { mean_activation(d, 5); }) == ErrorCode::UnknownLayer);
    }
}

TEST_CASE("mean_activation is invariant to prompt order") {
    std::mt19937_64 rng(2);
    ActivationDump d = make_dump(rng, {3}, 25, 9);
    const Vec m = mean_activation(d, 3);
    std::vector<std::size_t> perm(25);
    for (std::size_t i = 0; i < 25; ++i) {
        perm[i] = i;
    }
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat shuffled(25, 9);
    for (std::size_t i = 0; i < 25; ++i) {
        for (std::size_t j = 0; j < 9; ++j) {
            shuffled(i, j) = d.layers.at(3)(perm[i], j);
        }
    }
    d.layers.at(3) = shuffled;
    CHECK(mean_activation(d, 3) == m);
}

TEST_CASE("dump round trip") {
    std::mt19937_64 rng(3);
    ActivationDump d = make_dump(rng, {4, 7}, 3, 8);
    d.aggregation = Aggregation::mean_tokens;
    const auto dir = sra::test::scratch_dir("dump_round_trip");
    write_dump(d, dir / "a.acts");
    const ActivationDump back = read_dump(dir / "a.acts");
    CHECK(back.model_id == d.model_id);
    CHECK(back.prompt_set_id == d.prompt_set_id);
    CHECK(back.aggregation == Aggregation::mean_tokens);
    CHECK(back.hidden_dim == 8);
    CHECK(back.num_prompts == 3);
    CHECK(back.layer_ids() == std::vector<int>{4, 7});
    CHECK(back.layers == d.layers);

    write_dump(back, dir / "b.acts");
    CHECK(read_file_bytes(dir / "a.acts") == read_file_bytes(dir / "b.acts"));
}

TEST_CASE("container rejects malformed files") {
    nlohmann::json manifest = {{"version", 1},
                               {"tensors",
                                {{{"name", "layer.0"},
                                  {"dtype", "f32"},
                                  {"shape", {1, 7}},
                                  {"byte_offset", 0},
                                  {"byte_length", 28}}}}};
    CHECK(error_code_of([&] { decode_tensor_file(kActivationMagic, raw_container(manifest, 8)); }) ==
          ErrorCode::CorruptHeader);
    CHECK_NOTHROW(decode_tensor_file(kActivationMagic, raw_container(manifest, 7)));

    auto bad_len = manifest;
    bad_len["tensors"][0]["byte_length"] = 32;
    CHECK(error_code_of([&] { decode_tensor_file(kActivationMagic, raw_container(bad_len, 8)); }) ==
          ErrorCode::ShapeMismatch);

    auto future = manifest;
    future["version"] = 2;
    CHECK(error_code_of([&] { decode_tensor_file(kActivationMagic, raw_container(future, 7)); }) ==
          ErrorCode::UnsupportedVersion);

    auto other_rev = raw_container(manifest, 7);
    other_rev[7] = '2';
    CHECK(error_code_of([&] { decode_tensor_file(kActivationMagic, other_rev); }) == ErrorCode::UnsupportedVersion);
    CHECK(error_code_of([&] { decode_tensor_file(kWeightMagic, raw_container(manifest, 7)); }) ==
          ErrorCode::CorruptHeader);
    CHECK(error_code_of([&] { decode_tensor_file(kActivationMagic, std::vector<std::uint8_t>(10, 0)); }) ==
          ErrorCode::CorruptHeader);
}

TEST_CASE("container stores little-endian float32") {
    TensorFile f;
    f.meta = {{"k", "v"}};
    f.tensors.push_back({"x", {2}, {1.0f, -2.5f}});
    const auto bytes = encode_tensor_file(kWeightMagic, f);
    CHECK(std::memcmp(bytes.data(), "SRAWTS01", 8) == 0);
    std::uint64_t len = 0;
    for (int i = 7; i >= 0; --i) {
        len = (len << 8) | bytes[8 + static_cast<std::size_t>(i)];
    }
    REQUIRE(bytes.size() == 16 + len + 8);
    const std::uint8_t * payload = bytes.data() + 16 + len;
    // 1.0f = 0x3F800000, -2.5f = 0xC0200000
    CHECK(payload[0] == 0x00);
    CHECK(payload[3] == 0x3F);
    CHECK(payload[7] == 0xC0);
    const TensorFile back = decode_tensor_file(kWeightMagic, bytes);
    CHECK(back.meta == f.meta);
    CHECK(back.tensors[0].values == f.tensors[0].values);
}

TEST_CASE("single-token prompts aggregate identically") {
    ToyConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.ff_dim = 32;
    const ToyModel model(seed_model(cfg));
    const std::vector<std::string> prompts = {"a", "Z", "~"};
    const std::vector<int> layers = {0, 1};
    const ActivationDump last = capture_dump(model, prompts, layers, Aggregation::last_token, "p");
    const ActivationDump mean = capture_dump(model, prompts, layers, Aggregation::mean_tokens, "p");
    CHECK(last.layers == mean.layers);
    CHECK(parse_aggregation("mean_tokens") == Aggregation::mean_tokens);
    CHECK(error_code_of([] { parse_aggregation("max"); }) == ErrorCode::InvalidConfig);
}
