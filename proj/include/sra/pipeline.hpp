// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// The iterative loop: measure the refusal direction on the current model,
// clean it against the protected atoms, edit, re-evaluate, and feed the
// still-refused prompts into the next pass.

#pragma once

#include "sra/metrics.hpp"
#include "sra/registry.hpp"
#include "sra/toy_fixture.hpp"
#include "sra/weight_editor.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sra {

struct GammaSettings {
    // Median pre-cap gamma across target layers used to calibrate scale_c.
    double median = 0.8;
    double cap = 1.0;
    // When set, every entry uses this gamma and atom norms are ignored.
    std::optional<double> fixed;
    // Recalibrate scale_c every pass; when false the pass-1 value is held.
    bool recalibrate_each_pass = true;
};

struct StopThresholds {
    double refusal_rate = 0.02;
    double target_collapse = 0.15;
    double r_squared_floor = 0.005;
};

struct PipelineConfig {
    // Directory that relative paths resolve against.
    std::filesystem::path base_dir;

    // Exactly one model source: a weight container or a toy fixture spec.
    std::optional<std::filesystem::path> weights_path;
    std::optional<ToyFixtureSpec> toy;

    std::uint64_t seed = 42;
    std::vector<int> target_layers = {15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25};
    int max_passes = 4;
    RidgeOptions ridge;
    GammaSettings gamma;
    StopThresholds stop;
    std::vector<std::string> weight_kinds = {"mlp_down", "attn_out"};
    bool recompute_atoms = true;
    Aggregation aggregation = Aggregation::last_token;

    std::filesystem::path registry;
    std::filesystem::path harmful;
    std::filesystem::path harmless;
    std::filesystem::path rubric;
    std::vector<std::filesystem::path> corpora;

    int max_new_tokens = 2;
    std::size_t kl_context_length = 16;
    bool kl_include_harmful = false;
    // Also run the uncleaned baseline and include it in the drift report.
    bool run_baseline = true;

    // Errors: InvalidConfig.
    static PipelineConfig from_json(const nlohmann::json & j, const std::filesystem::path & base_dir);
    nlohmann::json to_json() const;
    std::filesystem::path resolve(const std::filesystem::path & p) const;
};

struct AtomPrompts {
    AtomSpec spec;
    std::vector<std::string> positive;
    std::vector<std::string> negative;
};

struct PipelineData {
    WeightSet weights;
    std::vector<AtomPrompts> atoms;
    std::vector<std::string> harmful;
    std::vector<std::string> harmless;
    Ruleset rules;
    std::vector<NamedCorpus> corpora;
};

// Loads the model, registry, prompt sets, rubric and corpora named by the
// config. The model must be at least as deep as the highest target layer.
PipelineData load_pipeline_data(const PipelineConfig & config);

struct LayerDiagnostics {
    std::vector<std::pair<std::string, double>> target_coeffs;
    std::vector<std::pair<std::string, double>> shield_coeffs;
    double r_squared = 0.0;
    std::size_t basis_size = 0;
    double gamma = 0.0;
};

struct PassReport {
    int pass_index = 1;
    std::map<int, LayerDiagnostics> per_layer;
    double refusal_rate_after = 0.0;
    std::size_t hard_negative_count = 0;
    double gamma_scale = 0.0;
    // No harmful prompts were left at the start of the pass; nothing edited.
    bool converged_empty = false;

    double mean_abs_target_coeff() const;
    // Mean R^2 over layers with a non-empty regression basis; nullopt if none.
    std::optional<double> mean_r_squared() const;
};

nlohmann::ordered_json pass_report_to_json(const PassReport & report);
PassReport pass_report_from_json(const nlohmann::json & j);

struct PassState {
    WeightSet weights;
    std::vector<std::string> harmful_set;
    std::vector<ConceptAtom> atoms;
    std::optional<double> gamma_scale;
    int next_pass = 1;
};

struct PassOutcome {
    PassReport report;
    RefusalDirection direction;
    EditPlan plan;
    std::vector<ConceptAtom> atoms;
    std::vector<std::string> hard_negatives;
};

// Computes all registry atoms on the given model.
std::vector<ConceptAtom> compute_atoms(const ToyModel & model, std::span<const AtomPrompts> atoms,
                                       std::span<const int> layers, Aggregation aggregation);

// One loop body. Updates state (weights, harmful set, cached atoms, gamma
// scale, pass counter). With cleaning off the edit direction is the
// normalized dirty vector.
PassOutcome run_pass(const PipelineConfig & config, const PipelineData & data, PassState & state, bool cleaning);

// The prompts whose verdict is a refusal, in input order.
std::vector<std::string> mine_hard_negatives(std::span<const std::pair<std::string, RubricVerdict>> responses);

// Reason the loop should stop after the last report, or nullopt.
std::optional<std::string> stop_reason(std::span<const PassReport> reports, const PipelineConfig & config);
bool stop_condition(std::span<const PassReport> reports, const PipelineConfig & config);

struct PipelineRun {
    WeightSet final_weights;
    std::vector<PassOutcome> passes;
    std::string stop;
};

PipelineRun run_passes(const PipelineConfig & config, const PipelineData & data, bool cleaning);

// The same loop with cleaning disabled.
WeightSet run_standard_baseline(const PipelineConfig & config, const PipelineData & data);

struct PipelineSummary {
    std::size_t passes = 0;
    std::string stop;
    std::vector<double> refusal_trajectory;
    std::optional<std::size_t> baseline_passes;
};

// Runs the cleaned loop (and the baseline when configured) and writes the
// artifact tree under out_dir:
//   passes/pass_<n>.json, directions/pass_<n>.json, weights/sra.wts,
//   baseline/..., report/drift.{csv,json}, plots/*.csv, summary.json
PipelineSummary run_pipeline(const PipelineConfig & config, const PipelineData & data,
                             const std::filesystem::path & out_dir);

} // namespace sra
