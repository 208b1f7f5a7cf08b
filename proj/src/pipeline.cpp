// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/pipeline.hpp"

#include "sra/error.hpp"
#include "sra/log.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace sra {

using nlohmann::json;
using nlohmann::ordered_json;

// --- config ----------------------------------------------------------------

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path & p) const {
    return p.is_absolute() ? p : base_dir / p;
}

PipelineConfig PipelineConfig::from_json(const json & j, const std::filesystem::path & base_dir) {
    if (!j.is_object()) {
        fail(ErrorCode::InvalidConfig, "pipeline config must be a JSON object");
    }
    PipelineConfig c;
    c.base_dir = base_dir;
    try {
        c.seed = j.value("seed", c.seed);
        const json & model = j.at("model");
        if (model.contains("weights")) {
            c.weights_path = model.at("weights").get<std::string>();
        }
        if (model.contains("toy")) {
            c.toy = ToyFixtureSpec::from_json(model.at("toy"));
        }
        if (c.weights_path.has_value() == c.toy.has_value()) {
            fail(ErrorCode::InvalidConfig, "model must name exactly one of 'weights' or 'toy'");
        }
        if (j.contains("target_layers")) {
            c.target_layers = j.at("target_layers").get<std::vector<int>>();
        }
        c.max_passes = j.value("max_passes", c.max_passes);
        if (j.contains("ridge")) {
            const json & r = j.at("ridge");
            if (r.contains("lambda") && !r.at("lambda").is_null()) {
                c.ridge.lambda = r.at("lambda").get<double>();
            }
            c.ridge.relative_lambda = r.value("relative_lambda", c.ridge.relative_lambda);
            c.ridge.normalize_atoms = r.value("normalize_atoms", c.ridge.normalize_atoms);
        }
        if (j.contains("gamma")) {
            const json & g = j.at("gamma");
            c.gamma.median = g.value("median", c.gamma.median);
            c.gamma.cap = g.value("cap", c.gamma.cap);
            if (g.contains("fixed") && !g.at("fixed").is_null()) {
                c.gamma.fixed = g.at("fixed").get<double>();
            }
            c.gamma.recalibrate_each_pass = g.value("recalibrate_each_pass", c.gamma.recalibrate_each_pass);
        }
        if (j.contains("stop")) {
            const json & s = j.at("stop");
            c.stop.refusal_rate = s.value("refusal_rate", c.stop.refusal_rate);
            c.stop.target_collapse = s.value("target_collapse", c.stop.target_collapse);
            c.stop.r_squared_floor = s.value("r_squared_floor", c.stop.r_squared_floor);
        }
        if (j.contains("weight_kinds")) {
            c.weight_kinds = j.at("weight_kinds").get<std::vector<std::string>>();
        }
        c.recompute_atoms = j.value("recompute_atoms", c.recompute_atoms);
        c.aggregation = parse_aggregation(j.value("aggregation", std::string("last_token")));
        c.registry = j.at("registry").get<std::string>();
        c.harmful = j.at("harmful").get<std::string>();
        c.harmless = j.at("harmless").get<std::string>();
        c.rubric = j.at("rubric").get<std::string>();
        for (const auto & p : j.value("corpora", json::array())) {
            c.corpora.emplace_back(p.get<std::string>());
        }
        c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
        c.kl_context_length = j.value("kl_context_length", c.kl_context_length);
        c.kl_include_harmful = j.value("kl_include_harmful", c.kl_include_harmful);
        c.run_baseline = j.value("run_baseline", c.run_baseline);
    } catch (const json::exception & ex) {
        fail(ErrorCode::InvalidConfig, fmt::format("pipeline config: {}", ex.what()));
    }

    if (c.toy) {
        c.toy->config.seed = c.seed;
    }
    if (c.max_passes < 1) {
        fail(ErrorCode::InvalidConfig, "max_passes must be at least 1");
    }
    if (c.target_layers.empty()) {
        fail(ErrorCode::InvalidConfig, "target_layers is empty");
    }
    std::sort(c.target_layers.begin(), c.target_layers.end());
    if (std::adjacent_find(c.target_layers.begin(), c.target_layers.end()) != c.target_layers.end()) {
        fail(ErrorCode::InvalidConfig, "target_layers holds duplicates");
    }
    for (const auto & k : c.weight_kinds) {
        if (k != "mlp_down" && k != "attn_out") {
            fail(ErrorCode::InvalidConfig, fmt::format("weight kind '{}' does not write the residual stream", k));
        }
    }
    if (!(c.gamma.median > 0.0) || !(c.gamma.cap > 0.0 && c.gamma.cap <= 1.0)) {
        fail(ErrorCode::InvalidConfig, "gamma median must be positive and cap in (0, 1]");
    }
    if (c.gamma.fixed && !(*c.gamma.fixed >= 0.0 && *c.gamma.fixed <= 1.0)) {
        fail(ErrorCode::InvalidConfig, "fixed gamma must lie in [0, 1]");
    }
    if (c.max_new_tokens < 1) {
        fail(ErrorCode::InvalidConfig, "max_new_tokens must be at least 1");
    }
    return c;
}

json PipelineConfig::to_json() const {
    json model = json::object();
    if (weights_path) {
        model["weights"] = weights_path->string();
    }
    if (toy) {
        model["toy"] = toy->to_json();
    }
    json corpora_list = json::array();
    for (const auto & p : corpora) {
        corpora_list.push_back(p.string());
    }
    return {{"model", model},
            {"seed", seed},
            {"target_layers", target_layers},
            {"max_passes", max_passes},
            {"ridge",
             {{"lambda", ridge.lambda ? json(*ridge.lambda) : json(nullptr)},
              {"relative_lambda", ridge.relative_lambda},
              {"normalize_atoms", ridge.normalize_atoms}}},
            {"gamma",
             {{"median", gamma.median},
              {"cap", gamma.cap},
              {"fixed", gamma.fixed ? json(*gamma.fixed) : json(nullptr)},
              {"recalibrate_each_pass", gamma.recalibrate_each_pass}}},
            {"stop",
             {{"refusal_rate", stop.refusal_rate},
              {"target_collapse", stop.target_collapse},
              {"r_squared_floor", stop.r_squared_floor}}},
            {"weight_kinds", weight_kinds},
            {"recompute_atoms", recompute_atoms},
            {"aggregation", std::string(to_string(aggregation))},
            {"registry", registry.string()},
            {"harmful", harmful.string()},
            {"harmless", harmless.string()},
            {"rubric", rubric.string()},
            {"corpora", corpora_list},
            {"max_new_tokens", max_new_tokens},
            {"kl_context_length", kl_context_length},
            {"kl_include_harmful", kl_include_harmful},
            {"run_baseline", run_baseline}};
}

PipelineData load_pipeline_data(const PipelineConfig & config) {
    PipelineData data;
    if (config.weights_path) {
        data.weights = read_weights(config.resolve(*config.weights_path));
    } else {
        data.weights = build_toy_fixture(*config.toy).planted;
    }
    const ToyConfig toy = ToyConfig::from_json(data.weights.config);
    if (config.target_layers.front() < 0 || config.target_layers.back() >= toy.n_layers) {
        fail(ErrorCode::InvalidConfig, fmt::format("target layers {}..{} outside the {}-layer model",
                                                   config.target_layers.front(), config.target_layers.back(),
                                                   toy.n_layers));
    }

    for (auto & spec : load_registry(config.resolve(config.registry))) {
        AtomPrompts a;
        a.positive = read_prompt_file(spec.positive_file);
        a.negative = read_prompt_file(spec.negative_file);
        a.spec = std::move(spec);
        data.atoms.push_back(std::move(a));
    }
    data.harmful = read_prompt_file(config.resolve(config.harmful));
    data.harmless = read_prompt_file(config.resolve(config.harmless));
    if (data.harmless.empty()) {
        fail(ErrorCode::EmptyDump, "harmless prompt set is empty");
    }
    data.rules = load_ruleset(config.resolve(config.rubric));
    for (const auto & p : config.corpora) {
        data.corpora.push_back(load_corpus(config.resolve(p), static_cast<std::size_t>(toy.max_seq)));
    }
    return data;
}

// --- reports ---------------------------------------------------------------

double PassReport::mean_abs_target_coeff() const {
    std::vector<double> values;
    for (const auto & [layer, diag] : per_layer) {
        for (const auto & [name, c] : diag.target_coeffs) {
            values.push_back(std::abs(c));
        }
    }
    return values.empty() ? 0.0 : exact_sum(values) / static_cast<double>(values.size());
}

std::optional<double> PassReport::mean_r_squared() const {
    std::vector<double> values;
    for (const auto & [layer, diag] : per_layer) {
        if (diag.basis_size > 0) {
            values.push_back(diag.r_squared);
        }
    }
    if (values.empty()) {
        return std::nullopt;
    }
    return exact_sum(values) / static_cast<double>(values.size());
}

namespace {

ordered_json coeffs_to_json(const std::vector<std::pair<std::string, double>> & coeffs) {
    ordered_json out = ordered_json::array();
    for (const auto & [name, c] : coeffs) {
        out.push_back({name, c});
    }
    return out;
}

std::vector<std::pair<std::string, double>> coeffs_from_json(const json & j) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto & e : j) {
        out.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
    }
    return out;
}

} // namespace

ordered_json pass_report_to_json(const PassReport & report) {
    ordered_json layers = ordered_json::object();
    for (const auto & [layer, d] : report.per_layer) {
        ordered_json entry;
        entry["gamma"] = d.gamma;
        entry["r_squared"] = d.r_squared;
        entry["basis_size"] = d.basis_size;
        entry["target_coeffs"] = coeffs_to_json(d.target_coeffs);
        entry["shield_coeffs"] = coeffs_to_json(d.shield_coeffs);
        layers[std::to_string(layer)] = std::move(entry);
    }
    ordered_json out;
    out["pass_index"] = report.pass_index;
    out["refusal_rate_after"] = report.refusal_rate_after;
    out["hard_negative_count"] = report.hard_negative_count;
    out["gamma_scale"] = report.gamma_scale;
    out["converged_empty"] = report.converged_empty;
    out["per_layer"] = std::move(layers);
    return out;
}

PassReport pass_report_from_json(const json & j) {
    PassReport r;
    try {
        r.pass_index = j.at("pass_index").get<int>();
        r.refusal_rate_after = j.at("refusal_rate_after").get<double>();
        r.hard_negative_count = j.at("hard_negative_count").get<std::size_t>();
        r.gamma_scale = j.value("gamma_scale", 0.0);
        r.converged_empty = j.value("converged_empty", false);
        for (const auto & [key, e] : j.at("per_layer").items()) {
            LayerDiagnostics d;
            d.gamma = e.at("gamma").get<double>();
            d.r_squared = e.at("r_squared").get<double>();
            d.basis_size = e.value("basis_size", std::size_t{0});
            d.target_coeffs = coeffs_from_json(e.at("target_coeffs"));
            d.shield_coeffs = coeffs_from_json(e.at("shield_coeffs"));
            r.per_layer.emplace(std::stoi(key), std::move(d));
        }
    } catch (const std::exception & ex) {
        fail(ErrorCode::InvalidConfig, fmt::format("pass report: {}", ex.what()));
    }
    return r;
}

// --- loop ------------------------------------------------------------------

std::vector<ConceptAtom> compute_atoms(const ToyModel & model, std::span<const AtomPrompts> atoms,
                                       std::span<const int> layers, Aggregation aggregation) {
    std::vector<ConceptAtom> out;
    out.reserve(atoms.size());
    for (const auto & a : atoms) {
        const auto pos = capture_dump(model, a.positive, layers, aggregation, a.spec.atom_id + ".pos");
        const auto neg = capture_dump(model, a.negative, layers, aggregation, a.spec.atom_id + ".neg");
        out.push_back(compute_atom(a.spec, pos, neg, layers));
    }
    return out;
}

std::vector<std::string> mine_hard_negatives(std::span<const std::pair<std::string, RubricVerdict>> responses) {
    std::vector<std::string> out;
    for (const auto & [prompt, verdict] : responses) {
        if (is_refusal(verdict.label)) {
            out.push_back(prompt);
        }
    }
    return out;
}

namespace {

LayerDiagnostics diagnose_layer(int layer, const Vec & dirty, std::span<const ConceptAtom> atoms,
                                const RidgeOptions & ridge) {
    LayerDiagnostics d;
    std::vector<NamedVec> unit_atoms;
    std::vector<AtomRole> roles;
    const double floor = degenerate_norm_threshold(dirty.dim());
    for (const auto & a : atoms) {
        const Vec & v = a.per_layer.at(layer);
        if (a.degenerate_layers.count(layer) != 0 || norm(v) < floor) {
            continue;
        }
        unit_atoms.push_back({a.atom_id, normalized(v)});
        roles.push_back(a.role);
    }
    if (unit_atoms.empty()) {
        return d;
    }
    std::vector<Vec> cols;
    for (const auto & u : unit_atoms) {
        cols.push_back(u.vec);
    }
    const double lambda = ridge.lambda.value_or(default_lambda(Mat::from_columns(cols), ridge.relative_lambda));
    const auto coeffs = spectral_breakdown(dirty, unit_atoms, lambda);
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        (roles[k] == AtomRole::Target ? d.target_coeffs : d.shield_coeffs).push_back(coeffs[k]);
    }
    return d;
}

} // namespace

PassOutcome run_pass(const PipelineConfig & config, const PipelineData & data, PassState & state, bool cleaning) {
    PassOutcome out;
    out.report.pass_index = state.next_pass++;
    const std::span<const int> layers = config.target_layers;
    const ToyModel model(state.weights);

    if (state.harmful_set.empty()) {
        log_info("pass {}: no harmful prompts left, nothing to edit", out.report.pass_index);
        out.report.converged_empty = true;
        out.report.refusal_rate_after =
            evaluate_refusals(model, data.harmful, data.rules, config.max_new_tokens).rate;
        out.report.gamma_scale = state.gamma_scale.value_or(0.0);
        return out;
    }

    const auto harm = capture_dump(model, state.harmful_set, layers, config.aggregation, "harmful");
    const auto safe = capture_dump(model, data.harmless, layers, config.aggregation, "harmless");
    const auto dirty = compute_refusal_direction(harm, safe, layers);
    if (config.recompute_atoms || state.atoms.empty()) {
        state.atoms = compute_atoms(model, data.atoms, layers, config.aggregation);
    }
    out.atoms = state.atoms;

    const bool has_protected =
        std::any_of(state.atoms.begin(), state.atoms.end(), [](const ConceptAtom & a) { return is_protected(a.role); });
    if (has_protected) {
        out.direction = clean_direction(dirty, state.atoms, config.ridge);
    } else {
        log_warn("registry has no Shield/Confound atoms; the edit direction is left uncleaned");
        out.direction.dirty = dirty;
        out.direction.clean = dirty;
        out.direction.normalize_atoms = config.ridge.normalize_atoms;
    }
    if (!cleaning) {
        out.direction.clean = out.direction.dirty;
    }

    // Per-layer gamma from the mean Target atom norm at that layer.
    std::map<int, double> target_norm;
    for (int layer : layers) {
        std::vector<double> norms;
        for (const auto & a : state.atoms) {
            if (a.role == AtomRole::Target && a.degenerate_layers.count(layer) == 0) {
                norms.push_back(norm(a.per_layer.at(layer)));
            }
        }
        if (!norms.empty()) {
            target_norm[layer] = exact_sum(norms) / static_cast<double>(norms.size());
        }
    }
    std::map<int, double> gamma;
    if (config.gamma.fixed) {
        for (int layer : layers) {
            gamma[layer] = *config.gamma.fixed;
        }
    } else if (target_norm.empty()) {
        log_warn("no Target atoms; using gamma {} at every layer", config.gamma.median);
        for (int layer : layers) {
            gamma[layer] = std::min(config.gamma.median, config.gamma.cap);
        }
    } else {
        if (!state.gamma_scale || config.gamma.recalibrate_each_pass) {
            std::vector<double> norms;
            for (const auto & [layer, n] : target_norm) {
                norms.push_back(n);
            }
            state.gamma_scale = calibrate_gamma_scale(norms, config.gamma.median);
        }
        for (int layer : layers) {
            auto it = target_norm.find(layer);
            gamma[layer] = it == target_norm.end()
                               ? 0.0
                               : semantic_energy_gamma(it->second, *state.gamma_scale, config.gamma.cap).gamma;
        }
    }
    out.report.gamma_scale = state.gamma_scale.value_or(0.0);

    for (int layer : layers) {
        const Vec & v = out.direction.clean.at(layer);
        LayerDiagnostics diag = diagnose_layer(layer, out.direction.dirty.at(layer), state.atoms, config.ridge);
        if (auto it = out.direction.fit.find(layer); it != out.direction.fit.end()) {
            diag.r_squared = it->second.r_squared;
            diag.basis_size = out.direction.basis.at(layer).size();
        }
        diag.gamma = gamma[layer];
        out.report.per_layer.emplace(layer, std::move(diag));

        if (norm(v) < degenerate_norm_threshold(v.dim())) {
            log_warn("pass {}: layer {} direction vanished, no edit", out.report.pass_index, layer);
            continue;
        }
        const Vec unit = normalized(v);
        for (const auto & kind : config.weight_kinds) {
            out.plan.entries.push_back({layer, layer_weight_id(layer, kind), unit, gamma[layer]});
        }
    }
    state.weights = apply_edit_plan(state.weights, out.plan);

    const ToyModel edited(state.weights);
    const RefusalEval eval = evaluate_refusals(edited, data.harmful, data.rules, config.max_new_tokens);
    std::map<std::string, RubricVerdict> by_prompt;
    for (std::size_t i = 0; i < data.harmful.size(); ++i) {
        by_prompt.emplace(data.harmful[i], eval.verdicts[i]);
    }
    std::vector<std::pair<std::string, RubricVerdict>> current;
    for (const auto & p : state.harmful_set) {
        current.emplace_back(p, by_prompt.at(p));
    }
    out.hard_negatives = mine_hard_negatives(current);
    state.harmful_set = out.hard_negatives;
    out.report.refusal_rate_after = eval.rate;
    out.report.hard_negative_count = out.hard_negatives.size();
    log_info("pass {}: refusal rate {:.3f}, {} hard negatives", out.report.pass_index, eval.rate,
             out.hard_negatives.size());
    return out;
}

std::optional<std::string> stop_reason(std::span<const PassReport> reports, const PipelineConfig & config) {
    if (reports.empty()) {
        return std::nullopt;
    }
    const PassReport & last = reports.back();
    if (last.converged_empty) {
        return "no harmful prompts left";
    }
    if (last.refusal_rate_after <= config.stop.refusal_rate) {
        return fmt::format("refusal rate {:.4f} <= {}", last.refusal_rate_after, config.stop.refusal_rate);
    }
    if (reports.size() >= 2) {
        const double first = reports.front().mean_abs_target_coeff();
        const double now = last.mean_abs_target_coeff();
        if (first > 0.0 && now < config.stop.target_collapse * first) {
            return fmt::format("target coefficients collapsed to {:.4f} of pass 1", now / first);
        }
    }
    if (auto r2 = last.mean_r_squared(); r2 && *r2 < config.stop.r_squared_floor) {
        return fmt::format("mean R^2 {:.5f} below {}", *r2, config.stop.r_squared_floor);
    }
    if (last.pass_index >= config.max_passes) {
        return fmt::format("reached {} passes", config.max_passes);
    }
    return std::nullopt;
}

bool stop_condition(std::span<const PassReport> reports, const PipelineConfig & config) {
    return stop_reason(reports, config).has_value();
}

PipelineRun run_passes(const PipelineConfig & config, const PipelineData & data, bool cleaning) {
    PassState state;
    state.weights = data.weights;
    state.harmful_set = data.harmful;
    PipelineRun run;
    std::vector<PassReport> reports;
    for (int t = 0; t < config.max_passes; ++t) {
        run.passes.push_back(run_pass(config, data, state, cleaning));
        reports.push_back(run.passes.back().report);
        if (auto reason = stop_reason(reports, config)) {
            run.stop = *reason;
            break;
        }
    }
    run.final_weights = std::move(state.weights);
    return run;
}

WeightSet run_standard_baseline(const PipelineConfig & config, const PipelineData & data) {
    return run_passes(config, data, false).final_weights;
}

// --- artifacts -------------------------------------------------------------

namespace {

void write_text(const std::filesystem::path & path, const std::string & text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
    }
    out << text;
}

void write_ordered(const std::filesystem::path & path, const ordered_json & j) {
    write_text(path, j.dump(2) + "\n");
}

void write_passes(const std::filesystem::path & dir, const PipelineRun & run) {
    for (const auto & p : run.passes) {
        write_ordered(dir / "passes" / fmt::format("pass_{}.json", p.report.pass_index),
                      pass_report_to_json(p.report));
        write_json_file(dir / "directions" / fmt::format("pass_{}.json", p.report.pass_index),
                        direction_to_json(p.direction));
    }
}

std::string csv_field(const std::string & s) {
    return s.find_first_of(",\"\n") == std::string::npos ? s : "\"" + s + "\"";
}

std::string orthogonality_csv(std::span<const NamedVec> vectors) {
    const Mat m = orthogonality_map(vectors);
    std::string out = "name";
    for (const auto & v : vectors) {
        out += "," + csv_field(v.name);
    }
    out += "\n";
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        out += csv_field(vectors[i].name);
        for (std::size_t j = 0; j < vectors.size(); ++j) {
            out += fmt::format(",{:.10g}", m(i, j));
        }
        out += "\n";
    }
    return out;
}

ordered_json trajectory_json(const PipelineRun & run) {
    ordered_json out;
    out["passes"] = run.passes.size();
    out["stop"] = run.stop;
    ordered_json rates = ordered_json::array();
    for (const auto & p : run.passes) {
        rates.push_back(p.report.refusal_rate_after);
    }
    out["refusal_trajectory"] = std::move(rates);
    return out;
}

} // namespace

PipelineSummary run_pipeline(const PipelineConfig & config, const PipelineData & data,
                             const std::filesystem::path & out_dir) {
    const PipelineRun sra = run_passes(config, data, true);
    write_passes(out_dir, sra);
    write_weights(sra.final_weights, out_dir / "weights" / "sra.wts");

    std::optional<PipelineRun> standard;
    if (config.run_baseline) {
        standard = run_passes(config, data, false);
        write_passes(out_dir / "baseline", *standard);
        write_weights(standard->final_weights, out_dir / "weights" / "standard.wts");
    }

    // Plot data: pass-1 geometry and coefficient trajectories.
    const PassOutcome * first = nullptr;
    for (const auto & p : sra.passes) {
        if (!p.report.converged_empty) {
            first = &p;
            break;
        }
    }
    if (first != nullptr) {
        for (int layer : config.target_layers) {
            std::vector<NamedVec> vectors;
            for (const auto & a : first->atoms) {
                if (a.degenerate_layers.count(layer) == 0) {
                    vectors.push_back({a.atom_id, a.per_layer.at(layer)});
                }
            }
            const Vec & dirty = first->direction.dirty.at(layer);
            const Vec & clean = first->direction.clean.at(layer);
            if (norm(dirty) > 0.0) {
                vectors.push_back({"dirty", dirty});
            }
            if (norm(clean) > 0.0) {
                vectors.push_back({"clean", clean});
            }
            write_text(out_dir / "plots" / fmt::format("orthogonality_layer_{}.csv", layer),
                       orthogonality_csv(vectors));
        }
    }
    std::string coeffs = "run,pass,layer,atom,role,coefficient\n";
    std::string r2 = "run,pass,layer,r_squared,gamma\n";
    auto add_run = [&](const char * name, const PipelineRun & run) {
        for (const auto & p : run.passes) {
            for (const auto & [layer, d] : p.report.per_layer) {
                for (const auto & [atom, c] : d.target_coeffs) {
                    coeffs += fmt::format("{},{},{},{},Target,{:.10g}\n", name, p.report.pass_index, layer, atom, c);
                }
                for (const auto & [atom, c] : d.shield_coeffs) {
                    coeffs += fmt::format("{},{},{},{},Protected,{:.10g}\n", name, p.report.pass_index, layer, atom, c);
                }
                r2 += fmt::format("{},{},{},{:.10g},{:.10g}\n", name, p.report.pass_index, layer, d.r_squared, d.gamma);
            }
        }
    };
    add_run("SRA", sra);
    if (standard) {
        add_run("Standard", *standard);
    }
    write_text(out_dir / "plots" / "coefficients.csv", coeffs);
    write_text(out_dir / "plots" / "r_squared.csv", r2);

    if (!data.corpora.empty()) {
        const ToyModel base(data.weights);
        const ToyModel sra_model(sra.final_weights);
        std::optional<ToyModel> std_model;
        std::vector<NamedModel> edited;
        if (standard) {
            std_model.emplace(standard->final_weights);
            edited.push_back({ModelState::Standard, &*std_model});
        }
        edited.push_back({ModelState::SRA, &sra_model});
        DriftOptions options;
        options.kl_context_length = config.kl_context_length;
        options.kl_include_harmful = config.kl_include_harmful;
        options.max_new_tokens = config.max_new_tokens;
        const DriftReport report = build_drift_report(base, edited, data.corpora, data.harmful, data.rules, options);
        write_text(out_dir / "report" / "drift.csv", drift_report_csv(report));
        write_ordered(out_dir / "report" / "drift.json", drift_report_json(report));
    }

    ordered_json summary;
    summary["sra"] = trajectory_json(sra);
    if (standard) {
        summary["standard"] = trajectory_json(*standard);
    }
    write_ordered(out_dir / "summary.json", summary);

    PipelineSummary s;
    s.passes = sra.passes.size();
    s.stop = sra.stop;
    for (const auto & p : sra.passes) {
        s.refusal_trajectory.push_back(p.report.refusal_rate_after);
    }
    if (standard) {
        s.baseline_passes = standard->passes.size();
    }
    return s;
}

} // namespace sra
