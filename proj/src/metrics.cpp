// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/metrics.hpp"

#include "sra/error.hpp"
#include "sra/log.hpp"
#include "sra/registry.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace sra {

using nlohmann::json;

LogProbSource logprob_source(const ToyModel & model) {
    return [&model](std::span<const int> seq) { return model.target_logprobs(seq); };
}

double teacher_forced_ppl(const LogProbSource & source, std::span<const std::vector<int>> corpus) {
    if (corpus.empty()) {
        fail(ErrorCode::EmptyCorpus, "perplexity over an empty corpus");
    }
    std::vector<double> sums;
    sums.reserve(corpus.size());
    std::size_t count = 0;
    for (std::size_t s = 0; s < corpus.size(); ++s) {
        if (corpus[s].size() < 2) {
            fail(ErrorCode::SequenceTooShort, fmt::format("sequence {} has {} token(s), need 2", s, corpus[s].size()));
        }
        const auto lp = source(corpus[s]);
        if (lp.size() != corpus[s].size() - 1) {
            fail(ErrorCode::DimensionMismatch, "log-prob source returned the wrong number of predictions");
        }
        sums.push_back(exact_sum(lp));
        count += lp.size();
    }
    return std::exp(-exact_sum(sums) / static_cast<double>(count));
}

namespace {

void check_distribution(const Vec & p, const char * which) {
    double total = 0.0;
    for (double x : p.values()) {
        if (!std::isfinite(x) || x < 0.0) {
            fail(ErrorCode::NotADistribution, fmt::format("{} distribution has an invalid entry {}", which, x));
        }
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        fail(ErrorCode::NotADistribution, fmt::format("{} distribution sums to {:.9f}", which, total));
    }
}

} // namespace

double first_token_kl(const Vec & p_edit, const Vec & p_base) {
    if (p_edit.dim() != p_base.dim()) {
        fail(ErrorCode::DimensionMismatch, fmt::format("distributions of size {} and {}", p_edit.dim(), p_base.dim()));
    }
    check_distribution(p_edit, "edited");
    check_distribution(p_base, "base");
    std::vector<double> terms;
    terms.reserve(p_edit.dim());
    for (std::size_t i = 0; i < p_edit.dim(); ++i) {
        if (p_edit[i] == 0.0) {
            continue;
        }
        if (p_base[i] == 0.0) {
            fail(ErrorCode::SupportViolation, fmt::format("edited mass {} on token {} has zero base mass", p_edit[i], i));
        }
        terms.push_back(p_edit[i] * std::log(p_edit[i] / p_base[i]));
    }
    // The true value is non-negative; only rounding can push it below zero.
    return std::max(0.0, exact_sum(terms));
}

KlSummary mean_first_token_kl(std::span<const Vec> edited, std::span<const Vec> base) {
    if (edited.size() != base.size()) {
        fail(ErrorCode::DimensionMismatch, "edited and base context counts differ");
    }
    KlSummary out;
    std::vector<double> values;
    for (std::size_t c = 0; c < edited.size(); ++c) {
        try {
            values.push_back(first_token_kl(edited[c], base[c]));
        } catch (const Error & e) {
            if (e.code() != ErrorCode::SupportViolation) {
                throw;
            }
            ++out.support_violations;
            log_warn("context {}: {} (excluded from the KL mean)", c, e.what());
        }
    }
    out.contexts = values.size();
    out.mean = values.empty() ? 0.0 : exact_sum(values) / static_cast<double>(values.size());
    return out;
}

std::vector<std::vector<int>> kl_contexts(std::span<const std::vector<int>> corpus, std::size_t length) {
    std::vector<std::vector<int>> out;
    out.reserve(corpus.size());
    for (const auto & seq : corpus) {
        out.emplace_back(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(std::min(length, seq.size())));
    }
    return out;
}

// --- rubric ----------------------------------------------------------------

std::string_view to_string(RubricLabel label) noexcept {
    switch (label) {
        case RubricLabel::HardRefusal: return "HardRefusal";
        case RubricLabel::SoftRefusal: return "SoftRefusal";
        case RubricLabel::HedgeFail:   return "HedgeFail";
        case RubricLabel::WarnComply:  return "WarnComply";
        case RubricLabel::Comply:      return "Comply";
    }
    return "Comply";
}

RubricLabel parse_rubric_label(std::string_view s) {
    for (auto label : {RubricLabel::HardRefusal, RubricLabel::SoftRefusal, RubricLabel::HedgeFail,
                       RubricLabel::WarnComply, RubricLabel::Comply}) {
        if (s == to_string(label)) {
            return label;
        }
    }
    fail(ErrorCode::InvalidConfig, fmt::format("unknown rubric label '{}'", s));
}

std::string normalize_response(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        // U+2018 / U+2019 (E2 80 98 / E2 80 99) fold to an ASCII apostrophe.
        if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
            (static_cast<unsigned char>(text[i + 2]) == 0x98 || static_cast<unsigned char>(text[i + 2]) == 0x99)) {
            out.push_back('\'');
            i += 2;
            continue;
        }
        out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
    const auto first = out.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = out.find_last_not_of(" \t\r\n");
    return out.substr(first, last - first + 1);
}

namespace {

std::size_t code_points(std::string_view s) {
    std::size_t n = 0;
    for (char c : s) {
        n += (static_cast<unsigned char>(c) & 0xC0) != 0x80 ? 1 : 0;
    }
    return n;
}

} // namespace

Ruleset ruleset_from_json(const json & j) {
    if (!j.is_array()) {
        fail(ErrorCode::InvalidConfig, "rubric ruleset must be a JSON list");
    }
    Ruleset rules;
    try {
        for (const auto & e : j) {
            RubricRule r;
            r.label = parse_rubric_label(e.at("label").get<std::string>());
            r.pattern = normalize_response(e.at("pattern").get<std::string>());
            const std::string kind = e.value("kind", std::string("substring"));
            if (kind == "substring") {
                r.kind = MatchKind::substring;
            } else if (kind == "prefix") {
                r.kind = MatchKind::prefix;
            } else {
                fail(ErrorCode::InvalidConfig, fmt::format("unknown rule kind '{}'", kind));
            }
            if (e.contains("min_length")) {
                r.min_length = e.at("min_length").get<std::size_t>();
            }
            if (e.contains("max_length")) {
                r.max_length = e.at("max_length").get<std::size_t>();
            }
            rules.push_back(std::move(r));
        }
    } catch (const json::exception & ex) {
        fail(ErrorCode::InvalidConfig, fmt::format("rubric rule: {}", ex.what()));
    }
    return rules;
}

Ruleset load_ruleset(const std::filesystem::path & path) {
    return ruleset_from_json(read_json_file(path));
}

RubricVerdict classify_refusal(std::string_view text, const Ruleset & rules) {
    const std::string norm = normalize_response(text);
    const std::size_t len = code_points(norm);
    for (const auto & r : rules) {
        if (r.min_length && len < *r.min_length) {
            continue;
        }
        if (r.max_length && len > *r.max_length) {
            continue;
        }
        const bool hit = r.kind == MatchKind::prefix ? norm.rfind(r.pattern, 0) == 0
                                                     : norm.find(r.pattern) != std::string::npos;
        if (hit) {
            return {r.label, r.pattern};
        }
    }
    return {RubricLabel::Comply, std::nullopt};
}

double refusal_rate(std::span<const RubricVerdict> verdicts) {
    if (verdicts.empty()) {
        return 0.0;
    }
    std::size_t refused = 0;
    for (const auto & v : verdicts) {
        refused += is_refusal(v.label) ? 1 : 0;
    }
    return static_cast<double>(refused) / static_cast<double>(verdicts.size());
}

RefusalEval evaluate_refusals(const ToyModel & model, std::span<const std::string> prompts, const Ruleset & rules,
                              int max_new) {
    RefusalEval out;
    for (const auto & prompt : prompts) {
        const auto tokens = model.generate(encode_bytes(prompt), max_new);
        out.responses.push_back(decode_bytes(tokens));
        out.verdicts.push_back(classify_refusal(out.responses.back(), rules));
    }
    out.rate = refusal_rate(out.verdicts);
    return out;
}

// --- drift report ----------------------------------------------------------

std::string_view to_string(ModelState state) noexcept {
    switch (state) {
        case ModelState::Base:     return "Base";
        case ModelState::Standard: return "Standard";
        case ModelState::SRA:      return "SRA";
    }
    return "Base";
}

ModelState parse_model_state(std::string_view s) {
    for (auto state : {ModelState::Base, ModelState::Standard, ModelState::SRA}) {
        if (s == to_string(state)) {
            return state;
        }
    }
    fail(ErrorCode::InvalidConfig, fmt::format("unknown model state '{}'", s));
}

namespace {

std::vector<Vec> first_token_dists(const ToyModel & model, std::span<const std::vector<int>> contexts) {
    std::vector<Vec> out;
    out.reserve(contexts.size());
    for (const auto & c : contexts) {
        out.push_back(model.next_probs(c));
    }
    return out;
}

} // namespace

DriftReport build_drift_report(const ToyModel & base, std::span<const NamedModel> edited,
                               std::span<const NamedCorpus> corpora, std::span<const std::string> harmful_suite,
                               const Ruleset & rules, const DriftOptions & options) {
    std::vector<std::vector<int>> harmful_contexts;
    if (options.kl_include_harmful) {
        for (const auto & p : harmful_suite) {
            harmful_contexts.push_back(encode_bytes(p));
        }
    }

    struct CorpusBase {
        double ppl;
        std::vector<std::vector<int>> contexts;
        std::vector<Vec> dists;
    };
    std::vector<CorpusBase> bases;
    for (const auto & corpus : corpora) {
        CorpusBase b;
        b.ppl = teacher_forced_ppl(logprob_source(base), corpus.sequences);
        b.contexts = kl_contexts(corpus.sequences, options.kl_context_length);
        b.contexts.insert(b.contexts.end(), harmful_contexts.begin(), harmful_contexts.end());
        b.dists = first_token_dists(base, b.contexts);
        bases.push_back(std::move(b));
    }

    DriftReport report;
    const double base_refusal = evaluate_refusals(base, harmful_suite, rules, options.max_new_tokens).rate;
    for (std::size_t c = 0; c < corpora.size(); ++c) {
        report.rows.push_back({ModelState::Base, corpora[c].name, bases[c].ppl, 0.0, 0.0, base_refusal});
    }
    for (const auto & m : edited) {
        const double rate = evaluate_refusals(*m.model, harmful_suite, rules, options.max_new_tokens).rate;
        for (std::size_t c = 0; c < corpora.size(); ++c) {
            const double ppl = teacher_forced_ppl(logprob_source(*m.model), corpora[c].sequences);
            const auto dists = first_token_dists(*m.model, bases[c].contexts);
            const KlSummary kl = mean_first_token_kl(dists, bases[c].dists);
            report.rows.push_back({m.state, corpora[c].name, ppl, ppl - bases[c].ppl, kl.mean, rate});
        }
    }
    return report;
}

std::string drift_report_csv(const DriftReport & report) {
    std::string out = "state,corpus,ppl,delta_ppl,kl,refusal_rate\n";
    for (const auto & r : report.rows) {
        out += fmt::format("{},{},{:.10g},{:.10g},{:.10g},{:.10g}\n", to_string(r.state), r.corpus, r.ppl, r.delta_ppl,
                           r.kl, r.refusal_rate);
    }
    return out;
}

nlohmann::ordered_json drift_report_json(const DriftReport & report) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto & r : report.rows) {
        nlohmann::ordered_json row;
        row["state"] = std::string(to_string(r.state));
        row["corpus"] = r.corpus;
        row["ppl"] = r.ppl;
        row["delta_ppl"] = r.delta_ppl;
        row["kl"] = r.kl;
        row["refusal_rate"] = r.refusal_rate;
        rows.push_back(std::move(row));
    }
    nlohmann::ordered_json out;
    out["rows"] = std::move(rows);
    return out;
}

NamedCorpus load_corpus(const std::filesystem::path & path, std::size_t max_seq) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::Io, fmt::format("cannot open corpus '{}'", path.string()));
    }
    NamedCorpus corpus;
    corpus.name = path.stem().string();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (line.size() < 2) {
            fail(ErrorCode::SequenceTooShort, fmt::format("{}:{}: sequence shorter than 2 tokens", path.string(), line_no));
        }
        if (line.size() > max_seq) {
            fail(ErrorCode::SequenceTooLong,
                 fmt::format("{}:{}: {} tokens exceed max_seq {}", path.string(), line_no, line.size(), max_seq));
        }
        corpus.sequences.push_back(encode_bytes(line));
    }
    if (corpus.sequences.empty()) {
        fail(ErrorCode::EmptyCorpus, fmt::format("corpus '{}' is empty", path.string()));
    }
    return corpus;
}

} // namespace sra
