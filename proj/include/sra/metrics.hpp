// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Evaluation stack: teacher-forced perplexity, first-token KL, the refusal
// rubric, and drift reports comparing edited model states against a base.

#pragma once

#include "sra/linalg.hpp"
#include "sra/toy_model.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sra {

// Returns log p(seq[i+1] | seq[..i]) for every i in 0 .. n-2, natural log.
using LogProbSource = std::function<std::vector<double>(std::span<const int>)>;

LogProbSource logprob_source(const ToyModel & model);

// exp(-(sum of next-token log-probs) / (number of predictions)) over whole
// sequences. Per-sequence sums are combined exactly, so the value does not
// depend on corpus order.
//
// Errors: EmptyCorpus, SequenceTooShort (a sequence with fewer than 2 tokens).
double teacher_forced_ppl(const LogProbSource & source, std::span<const std::vector<int>> corpus);

// KL(p_edit || p_base) = sum p_edit ln(p_edit / p_base), with 0 ln(0/q) = 0.
//
// Errors: DimensionMismatch, NotADistribution (negative, non-finite, or sum
// off 1 by more than 1e-6), SupportViolation (p_edit > 0 where p_base == 0).
double first_token_kl(const Vec & p_edit, const Vec & p_base);

struct KlSummary {
    double mean = 0.0;
    std::size_t contexts = 0;            // contexts entering the mean
    std::size_t support_violations = 0;  // excluded with a warning
};

KlSummary mean_first_token_kl(std::span<const Vec> edited, std::span<const Vec> base);

// The first `length` tokens of each sequence (whole sequence when shorter).
std::vector<std::vector<int>> kl_contexts(std::span<const std::vector<int>> corpus, std::size_t length = 16);

// ---------------------------------------------------------------------------
// Refusal rubric

enum class RubricLabel { HardRefusal, SoftRefusal, HedgeFail, WarnComply, Comply };

std::string_view to_string(RubricLabel label) noexcept;
RubricLabel parse_rubric_label(std::string_view s);

inline bool is_refusal(RubricLabel label) noexcept {
    return label == RubricLabel::HardRefusal || label == RubricLabel::SoftRefusal || label == RubricLabel::HedgeFail;
}

enum class MatchKind { substring, prefix };

// Matching runs on lowercased text with typographic apostrophes folded to
// ASCII and surrounding whitespace trimmed. Lengths count code points of that
// normalized text.
struct RubricRule {
    RubricLabel label = RubricLabel::Comply;
    std::string pattern;
    MatchKind kind = MatchKind::substring;
    std::optional<std::size_t> min_length;
    std::optional<std::size_t> max_length;
};

struct RubricVerdict {
    RubricLabel label = RubricLabel::Comply;
    std::optional<std::string> matched_pattern;
};

using Ruleset = std::vector<RubricRule>;

// Ordered JSON list of {label, pattern, kind[, min_length][, max_length]}.
// Errors: InvalidConfig.
Ruleset load_ruleset(const std::filesystem::path & path);
Ruleset ruleset_from_json(const nlohmann::json & j);

std::string normalize_response(std::string_view text);

// First matching rule wins; no match means Comply.
RubricVerdict classify_refusal(std::string_view text, const Ruleset & rules);

// Fraction of verdicts labelled HardRefusal, SoftRefusal or HedgeFail; 0 for
// an empty list.
double refusal_rate(std::span<const RubricVerdict> verdicts);

struct RefusalEval {
    std::vector<std::string> responses;
    std::vector<RubricVerdict> verdicts;
    double rate = 0.0;
};

RefusalEval evaluate_refusals(const ToyModel & model, std::span<const std::string> prompts, const Ruleset & rules,
                              int max_new);

// ---------------------------------------------------------------------------
// Drift report

enum class ModelState { Base, Standard, SRA };

std::string_view to_string(ModelState state) noexcept;
ModelState parse_model_state(std::string_view s);

struct DriftRow {
    ModelState state = ModelState::Base;
    std::string corpus;
    double ppl = 0.0;
    double delta_ppl = 0.0;
    double kl = 0.0;
    double refusal_rate = 0.0;
};

struct DriftReport {
    std::vector<DriftRow> rows;
};

struct NamedCorpus {
    std::string name;
    std::vector<std::vector<int>> sequences;
};

struct NamedModel {
    ModelState state = ModelState::Standard;
    const ToyModel * model = nullptr;
};

struct DriftOptions {
    std::size_t kl_context_length = 16;
    // Also average KL over the harmful-suite prompts, not only corpus contexts.
    bool kl_include_harmful = false;
    int max_new_tokens = 4;
};

// One Base row per corpus followed by the edited states in the given order.
DriftReport build_drift_report(const ToyModel & base, std::span<const NamedModel> edited,
                               std::span<const NamedCorpus> corpora, std::span<const std::string> harmful_suite,
                               const Ruleset & rules, const DriftOptions & options);

// Header: state,corpus,ppl,delta_ppl,kl,refusal_rate
std::string drift_report_csv(const DriftReport & report);
nlohmann::ordered_json drift_report_json(const DriftReport & report);

// One sequence per non-empty line, byte-encoded. Errors: EmptyCorpus,
// SequenceTooShort, SequenceTooLong (over max_seq).
NamedCorpus load_corpus(const std::filesystem::path & path, std::size_t max_seq);

} // namespace sra
