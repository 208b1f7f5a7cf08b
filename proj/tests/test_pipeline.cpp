// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/pipeline.hpp"

#include "test_support.hpp"

#include <algorithm>
#include <fstream>

using namespace sra;
using sra::test::error_code_of;

namespace {

nlohmann::json shipped_config_json() { return read_json_file(sra::test::data_dir() / "pipeline.json"); }

PipelineConfig small_config() {
    auto j = shipped_config_json();
    j["target_layers"] = {4, 5};
    j["max_passes"] = 2;
    j["run_baseline"] = false;
    return PipelineConfig::from_json(j, sra::test::data_dir());
}

// Shipped data with the prompt sets trimmed for test runtime.
const PipelineData & small_data() {
    static const PipelineData d = [] {
        PipelineData out = load_pipeline_data(small_config());
        out.harmful.resize(12);
        out.harmless.resize(24);
        for (auto & c : out.corpora) {
            c.sequences.resize(6);
        }
        return out;
    }();
    return d;
}

PassReport report_with(int pass, double refusal, double target_coeff, double r2) {
    PassReport r;
    r.pass_index = pass;
    r.refusal_rate_after = refusal;
    LayerDiagnostics d;
    d.target_coeffs = {{"t", target_coeff}};
    d.shield_coeffs = {{"s", 0.1}};
    d.r_squared = r2;
    d.basis_size = 1;
    r.per_layer.emplace(4, d);
    return r;
}

} // namespace

TEST_CASE("pipeline config parsing") {
    const PipelineConfig c = PipelineConfig::from_json(shipped_config_json(), sra::test::data_dir());
    CHECK(c.seed == 42);
    CHECK(c.max_passes == 4);
    CHECK(c.target_layers == std::vector<int>{4, 5, 6, 7});
    CHECK(c.toy.has_value());
    CHECK(c.toy->config.seed == 42);
    CHECK(c.resolve("registry.json") == sra::test::data_dir() / "registry.json");

    const PipelineConfig back = PipelineConfig::from_json(c.to_json(), c.base_dir);
    CHECK(back.to_json() == c.to_json());

    PipelineConfig defaults;
    CHECK(defaults.target_layers.front() == 15);
    CHECK(defaults.target_layers.back() == 25);
    CHECK(defaults.max_passes == 4);

    auto bad = [](auto mutate) {
        auto j = shipped_config_json();
        mutate(j);
        return error_code_of([&] { PipelineConfig::from_json(j, sra::test::data_dir()); });
    };
    CHECK(bad([](auto & j) { j["max_passes"] = 0; }) == ErrorCode::InvalidConfig);
    CHECK(bad([](auto & j) { j["target_layers"] = nlohmann::json::array(); }) == ErrorCode::InvalidConfig);
    CHECK(bad([](auto & j) { j["target_layers"] = {4, 4}; }) == ErrorCode::InvalidConfig);
    CHECK(bad([](auto & j) { j["weight_kinds"] = {"q"}; }) == ErrorCode::InvalidConfig);
    CHECK(bad([](auto & j) { j["model"]["weights"] = "w.wts"; }) == ErrorCode::InvalidConfig);
    CHECK(bad([](auto & j) { j.erase("registry"); }) == ErrorCode::InvalidConfig);
    CHECK(bad([](auto & j) { j["gamma"]["fixed"] = 1.5; }) == ErrorCode::InvalidConfig);

    auto deep = shipped_config_json();
    deep["target_layers"] = {6, 8};
    CHECK(error_code_of([&] { load_pipeline_data(PipelineConfig::from_json(deep, sra::test::data_dir())); }) ==
          ErrorCode::InvalidConfig);
}

TEST_CASE("mine_hard_negatives") {
    using L = RubricLabel;
    std::vector<std::pair<std::string, RubricVerdict>> all_comply = {{"a", {L::Comply, {}}}, {"b", {L::WarnComply, {}}}};
    CHECK(mine_hard_negatives(all_comply).empty());

    std::vector<std::pair<std::string, RubricVerdict>> all_hard = {{"x", {L::HardRefusal, {}}},
                                                                   {"y", {L::HardRefusal, {}}}};
    CHECK(mine_hard_negatives(all_hard) == std::vector<std::string>{"x", "y"});

    const std::vector<L> labels = {L::Comply,    L::HardRefusal, L::WarnComply, L::SoftRefusal, L::Comply,
                                   L::HedgeFail, L::Comply,      L::Comply,     L::HardRefusal, L::WarnComply};
    std::vector<std::pair<std::string, RubricVerdict>> mixed;
    std::vector<std::string> expected;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::string p = "p" + std::to_string(i);
        mixed.push_back({p, {labels[i], {}}});
        if (labels[i] == L::HardRefusal || labels[i] == L::SoftRefusal || labels[i] == L::HedgeFail) {
            expected.push_back(p);
        }
    }
    REQUIRE(expected.size() == 4);
    CHECK(mine_hard_negatives(mixed) == expected);
}

TEST_CASE("stop_condition") {
    PipelineConfig c;
    c.max_passes = 4;
    std::vector<PassReport> r = {report_with(1, 0.0, 5.0, 0.2)};
    CHECK(stop_condition(r, c));

    r = {report_with(1, 0.5, 5.0, 0.2)};
    CHECK_FALSE(stop_condition(r, c));

    r = {report_with(1, 0.5, 5.0, 0.035)};
    CHECK_FALSE(stop_condition(r, c));
    r.push_back(report_with(2, 0.4, 4.0, 0.004));
    CHECK(stop_condition(r, c));

    r = {report_with(1, 0.5, 5.0, 0.2), report_with(2, 0.5, 0.5, 0.2)};
    CHECK(stop_condition(r, c));
    r = {report_with(1, 0.5, 5.0, 0.2), report_with(2, 0.5, 4.0, 0.2)};
    CHECK_FALSE(stop_condition(r, c));
    r.push_back(report_with(3, 0.5, 4.0, 0.2));
    r.push_back(report_with(4, 0.5, 4.0, 0.2));
    CHECK(stop_condition(r, c));

    PassReport empty;
    empty.converged_empty = true;
    empty.refusal_rate_after = 0.5;
    CHECK(stop_condition(std::vector<PassReport>{empty}, c));
}

TEST_CASE("mean R^2 ignores layers without a basis") {
    PassReport r = report_with(1, 0.5, 1.0, 0.2);
    LayerDiagnostics none;
    r.per_layer.emplace(5, none);
    CHECK(r.mean_r_squared() == doctest::Approx(0.2));
    CHECK(PassReport{}.mean_r_squared() == std::nullopt);
}

TEST_CASE("pass report serialization round trips") {
    PassReport r = report_with(3, 0.25, -1.5, 0.03);
    r.hard_negative_count = 7;
    r.gamma_scale = 0.04;
    r.per_layer.at(4).gamma = 0.8;
    const PassReport back = pass_report_from_json(pass_report_to_json(r));
    CHECK(pass_report_to_json(back) == pass_report_to_json(r));
    CHECK(back.per_layer.at(4).target_coeffs == r.per_layer.at(4).target_coeffs);
    CHECK(back.hard_negative_count == 7);
}

TEST_CASE("run_pass with nothing left to edit converges") {
    const PipelineConfig c = small_config();
    PassState state;
    state.weights = small_data().weights;
    const PassOutcome out = run_pass(c, small_data(), state, true);
    CHECK(out.report.converged_empty);
    CHECK(out.plan.entries.empty());
    CHECK(state.weights == small_data().weights);
    CHECK(stop_condition(std::vector<PassReport>{out.report}, c));
}

TEST_CASE("a pass on the planted toy model") {
    const PipelineConfig c = small_config();
    const PipelineData & d = small_data();
    PassState state;
    state.weights = d.weights;
    state.harmful_set = d.harmful;
    const PassOutcome first = run_pass(c, d, state, true);

    CHECK(first.report.pass_index == 1);
    CHECK(first.plan.entries.size() == c.target_layers.size() * c.weight_kinds.size());
    CHECK(first.report.hard_negative_count <= d.harmful.size());
    for (const auto & [layer, diag] : first.report.per_layer) {
        CHECK(diag.r_squared >= 0.0);
        CHECK(diag.r_squared <= 1.0);
        CHECK(diag.target_coeffs.size() == 3);
        CHECK(diag.shield_coeffs.size() == 7);
        CHECK(diag.basis_size == 7);
    }
    for (const auto & p : first.hard_negatives) {
        CHECK(std::find(d.harmful.begin(), d.harmful.end(), p) != d.harmful.end());
    }

    // Re-measure on the edited model with the full harmful set.
    state.harmful_set = d.harmful;
    const PassOutcome again = run_pass(c, d, state, true);
    CHECK(again.report.pass_index == 2);
    CHECK(again.report.mean_abs_target_coeff() < first.report.mean_abs_target_coeff());
}

TEST_CASE("cleaning off is the standard baseline") {
    const PipelineConfig c = small_config();
    const PipelineData & d = small_data();
    const PipelineRun off = run_passes(c, d, false);
    CHECK(off.final_weights == run_standard_baseline(c, d));
    for (const auto & p : off.passes) {
        for (const auto & e : p.plan.entries) {
            CHECK(e.direction == normalized(p.direction.dirty.at(e.layer)));
        }
    }
}

TEST_CASE("without protected atoms SRA equals Standard") {
    const auto dir = sra::test::scratch_dir("targets_only");
    const auto atoms = sra::test::data_dir() / "atoms";
    nlohmann::json reg = nlohmann::json::array();
    reg.push_back({{"atom_id", "deception"},
                   {"role", "Target"},
                   {"positive_file", (atoms / "deception_pos.txt").string()},
                   {"negative_file", (atoms / "deception_neg.txt").string()}});
    write_json_file(dir / "registry.json", reg);

    const PipelineConfig c = small_config();
    PipelineData d = small_data();
    d.atoms.clear();
    for (auto & spec : load_registry(dir / "registry.json")) {
        d.atoms.push_back({spec, read_prompt_file(spec.positive_file), read_prompt_file(spec.negative_file)});
    }
    CHECK(run_passes(c, d, true).final_weights == run_passes(c, d, false).final_weights);
}

TEST_CASE("exactly T reports when no stop rule fires") {
    PipelineConfig c = small_config();
    c.stop.refusal_rate = -1.0;
    c.stop.target_collapse = 0.0;
    c.stop.r_squared_floor = 0.0;
    c.gamma.fixed = 0.05;
    c.max_passes = 2;
    const PipelineRun run = run_passes(c, small_data(), true);
    REQUIRE(run.passes.size() == 2);
    CHECK(run.passes[0].report.pass_index == 1);
    CHECK(run.passes[1].report.pass_index == 2);
    // Hard negatives only ever shrink.
    for (const auto & p : run.passes[1].hard_negatives) {
        const auto & prev = run.passes[0].hard_negatives;
        CHECK(std::find(prev.begin(), prev.end(), p) != prev.end());
    }
    for (const auto & e : run.passes[0].plan.entries) {
        CHECK(e.gamma == 0.05);
    }
}

TEST_CASE("run_pipeline writes the artifact tree") {
    PipelineConfig c = small_config();
    c.max_passes = 1;
    c.run_baseline = true;
    const auto out = sra::test::scratch_dir("pipeline_tree");
    const PipelineSummary s = run_pipeline(c, small_data(), out);
    CHECK(s.passes == 1);
    CHECK(s.baseline_passes == std::optional<std::size_t>(1));
    for (const char * f : {"passes/pass_1.json", "directions/pass_1.json", "weights/sra.wts",
                           "weights/standard.wts", "baseline/passes/pass_1.json", "report/drift.csv",
                           "report/drift.json", "plots/coefficients.csv", "plots/r_squared.csv",
                           "plots/orthogonality_layer_4.csv", "summary.json"}) {
        CHECK_MESSAGE(std::filesystem::exists(out / f), f);
    }
    const WeightSet final_weights = read_weights(out / "weights" / "sra.wts");
    CHECK(final_weights.tensors.size() == small_data().weights.tensors.size());
    std::ifstream csv(out / "report" / "drift.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "state,corpus,ppl,delta_ppl,kl,refusal_rate");
}
