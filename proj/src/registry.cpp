// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/registry.hpp"

#include "sra/error.hpp"
#include "sra/log.hpp"

#include <fmt/core.h>

#include <cmath>
#include <fstream>

namespace sra {

using nlohmann::json;

std::string_view to_string(AtomRole role) noexcept {
    switch (role) {
        case AtomRole::Target:   return "Target";
        case AtomRole::Shield:   return "Shield";
        case AtomRole::Confound: return "Confound";
    }
    return "Unknown";
}

AtomRole parse_atom_role(std::string_view s) {
    if (s == "Target" || s == "target") return AtomRole::Target;
    if (s == "Shield" || s == "shield") return AtomRole::Shield;
    if (s == "Confound" || s == "confound") return AtomRole::Confound;
    fail(ErrorCode::InvalidRegistry, fmt::format("unknown atom role '{}'", s));
}

std::vector<std::string> read_prompt_file(const std::filesystem::path & path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::InvalidRegistry, fmt::format("cannot open prompt file '{}'", path.string()));
    }
    std::vector<std::string> prompts;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        prompts.push_back(line);
    }
    return prompts;
}

json read_json_file(const std::filesystem::path & path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::Io, fmt::format("cannot open '{}'", path.string()));
    }
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        fail(ErrorCode::InvalidConfig, fmt::format("'{}' is not valid JSON", path.string()));
    }
    return j;
}

void write_json_file(const std::filesystem::path & path, const json & j) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        fail(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
    }
    out << j.dump(2) << '\n';
}

std::vector<AtomSpec> load_registry(const std::filesystem::path & manifest_path) {
    const json j = read_json_file(manifest_path);
    if (!j.is_array()) {
        fail(ErrorCode::InvalidRegistry, "registry manifest must be a JSON list");
    }
    const auto base = manifest_path.parent_path();
    std::vector<AtomSpec> specs;
    try {
        for (const auto & e : j) {
            AtomSpec s;
            s.atom_id = e.at("atom_id").get<std::string>();
            s.role = parse_atom_role(e.at("role").get<std::string>());
            s.positive_file = base / e.at("positive_file").get<std::string>();
            s.negative_file = base / e.at("negative_file").get<std::string>();
            specs.push_back(std::move(s));
        }
    } catch (const json::exception & ex) {
        fail(ErrorCode::InvalidRegistry, fmt::format("registry entry: {}", ex.what()));
    }
    if (specs.empty()) {
        log_warn("registry '{}' is empty", manifest_path.string());
    }
    validate_registry(specs);
    return specs;
}

void validate_registry(std::span<const AtomSpec> specs) {
    std::set<std::string> seen;
    for (const auto & s : specs) {
        if (s.atom_id.empty()) {
            fail(ErrorCode::InvalidRegistry, "atom with empty id");
        }
        if (!seen.insert(s.atom_id).second) {
            fail(ErrorCode::InvalidRegistry, fmt::format("duplicate atom_id '{}'", s.atom_id));
        }
        for (const auto & file : {s.positive_file, s.negative_file}) {
            if (!std::filesystem::is_regular_file(file)) {
                fail(ErrorCode::InvalidRegistry,
                     fmt::format("atom '{}': prompt file '{}' not found", s.atom_id, file.string()));
            }
            const auto n = read_prompt_file(file).size();
            if (n < 2) {
                fail(ErrorCode::InvalidRegistry,
                     fmt::format("atom '{}': '{}' holds {} prompt(s), need at least 2", s.atom_id, file.string(), n));
            }
        }
    }
}

double degenerate_norm_threshold(std::size_t dim) noexcept {
    return 1e-12 * std::sqrt(static_cast<double>(dim));
}

namespace {

std::map<int, Vec> contrast(const ActivationDump & pos, const ActivationDump & neg, std::span<const int> layers) {
    if (pos.hidden_dim != neg.hidden_dim) {
        fail(ErrorCode::DimensionMismatch, fmt::format("dumps '{}' and '{}' have hidden dims {} and {}",
                                                       pos.prompt_set_id, neg.prompt_set_id, pos.hidden_dim,
                                                       neg.hidden_dim));
    }
    std::map<int, Vec> out;
    for (int layer : layers) {
        out.emplace(layer, mean_activation(pos, layer) - mean_activation(neg, layer));
    }
    return out;
}

} // namespace

ConceptAtom compute_atom(const AtomSpec & spec, const ActivationDump & pos, const ActivationDump & neg,
                         std::span<const int> layers) {
    ConceptAtom atom;
    atom.atom_id = spec.atom_id;
    atom.role = spec.role;
    atom.per_layer = contrast(pos, neg, layers);
    const double floor = degenerate_norm_threshold(pos.hidden_dim);
    for (const auto & [layer, v] : atom.per_layer) {
        if (norm(v) < floor) {
            atom.degenerate_layers.insert(layer);
            log_warn("atom '{}' is degenerate at layer {} (near-zero contrast)", spec.atom_id, layer);
        }
    }
    atom.provenance = {{"positive_file", spec.positive_file.filename().string()},
                       {"negative_file", spec.negative_file.filename().string()},
                       {"positive_prompts", pos.num_prompts},
                       {"negative_prompts", neg.num_prompts},
                       {"model_id", pos.model_id},
                       {"aggregation", std::string(to_string(pos.aggregation))}};
    return atom;
}

std::map<int, Vec> compute_refusal_direction(const ActivationDump & harm, const ActivationDump & safe,
                                             std::span<const int> layers) {
    return contrast(harm, safe, layers);
}

Mat protected_basis(int layer, std::size_t dim, std::span<const ConceptAtom> registry, bool normalize,
                    std::vector<std::string> * names) {
    std::vector<Vec> cols;
    std::vector<std::string> ids;
    for (const auto & atom : registry) {
        if (!is_protected(atom.role)) {
            continue;
        }
        auto it = atom.per_layer.find(layer);
        if (it == atom.per_layer.end()) {
            fail(ErrorCode::UnknownLayer, fmt::format("atom '{}' has no vector for layer {}", atom.atom_id, layer));
        }
        if (it->second.dim() != dim) {
            fail(ErrorCode::DimensionMismatch,
                 fmt::format("atom '{}' has dim {} at layer {}, expected {}", atom.atom_id, it->second.dim(), layer,
                             dim));
        }
        const double n = norm(it->second);
        if (atom.degenerate_layers.count(layer) != 0 || n < degenerate_norm_threshold(dim)) {
            log_warn("dropping degenerate atom '{}' from the layer {} basis", atom.atom_id, layer);
            continue;
        }
        cols.push_back(normalize ? (1.0 / n) * it->second : it->second);
        ids.push_back(atom.atom_id);
    }
    if (names != nullptr) {
        *names = ids;
    }
    if (cols.empty()) {
        return Mat(dim, 0);
    }
    return Mat::from_columns(cols);
}

RefusalDirection clean_direction(const std::map<int, Vec> & dirty, std::span<const ConceptAtom> registry,
                                 const RidgeOptions & options) {
    bool any_protected = false;
    for (const auto & atom : registry) {
        any_protected = any_protected || is_protected(atom.role);
    }
    if (!any_protected) {
        fail(ErrorCode::NoProtectedAtoms, "registry holds no Shield or Confound atoms");
    }

    RefusalDirection out;
    out.normalize_atoms = options.normalize_atoms;
    for (const auto & [layer, r] : dirty) {
        std::vector<std::string> names;
        const Mat a = protected_basis(layer, r.dim(), registry, options.normalize_atoms, &names);
        if (a.cols() == 0) {
            log_warn("layer {}: no usable protected atoms, direction left uncleaned", layer);
        }
        for (std::size_t i = 0; i < a.cols(); ++i) {
            for (std::size_t j = i + 1; j < a.cols(); ++j) {
                const double c = cosine(a.column(i), a.column(j));
                if (std::abs(c) > 0.98) {
                    log_warn("layer {}: atoms '{}' and '{}' are nearly collinear (cos {:.4f})", layer, names[i],
                             names[j], c);
                }
            }
        }
        const double lambda = options.lambda.value_or(default_lambda(a, options.relative_lambda));
        RegressionFit fit = residualize(r, a, lambda);
        if (fit.r_squared_clamped) {
            log_warn("layer {}: negative R^2 clamped to 0", layer);
        }
        out.dirty.emplace(layer, r);
        out.clean.emplace(layer, fit.residual);
        out.fit.emplace(layer, std::move(fit));
        out.basis.emplace(layer, std::move(names));
    }
    return out;
}

Vec reconstruct_clean(const RefusalDirection & direction, int layer, std::span<const ConceptAtom> registry) {
    const Vec & dirty = direction.dirty.at(layer);
    const RegressionFit & fit = direction.fit.at(layer);
    const auto & names = direction.basis.at(layer);
    Vec out = dirty;
    for (std::size_t k = 0; k < names.size(); ++k) {
        const ConceptAtom * atom = nullptr;
        for (const auto & a : registry) {
            if (a.atom_id == names[k]) {
                atom = &a;
            }
        }
        if (atom == nullptr) {
            fail(ErrorCode::InvalidRegistry, fmt::format("basis atom '{}' not in registry", names[k]));
        }
        Vec col = atom->per_layer.at(layer);
        if (direction.normalize_atoms) {
            col = normalized(col);
        }
        for (std::size_t i = 0; i < out.dim(); ++i) {
            out[i] -= fit.coefficients[k] * col[i];
        }
    }
    return out;
}

namespace {

json layer_map_to_json(const std::map<int, Vec> & m) {
    json j = json::object();
    for (const auto & [layer, v] : m) {
        j[std::to_string(layer)] = v.raw();
    }
    return j;
}

int parse_layer_key(const std::string & key) {
    try {
        std::size_t used = 0;
        const int layer = std::stoi(key, &used);
        if (used == key.size()) {
            return layer;
        }
    } catch (const std::exception &) {
    }
    fail(ErrorCode::InvalidConfig, fmt::format("bad layer key '{}'", key));
}

Vec vec_from_json(const json & j) {
    Vec v(j.get<std::vector<double>>());
    if (!v.all_finite()) {
        fail(ErrorCode::NonFiniteInput, "non-finite vector in JSON input");
    }
    return v;
}

} // namespace

json atom_to_json(const ConceptAtom & atom) {
    std::size_t dim = atom.per_layer.empty() ? 0 : atom.per_layer.begin()->second.dim();
    return {{"atom_id", atom.atom_id},
            {"role", std::string(to_string(atom.role))},
            {"hidden_dim", dim},
            {"layers", layer_map_to_json(atom.per_layer)},
            {"degenerate_layers", atom.degenerate_layers},
            {"provenance", atom.provenance}};
}

ConceptAtom atom_from_json(const json & j) {
    ConceptAtom atom;
    try {
        atom.atom_id = j.at("atom_id").get<std::string>();
        atom.role = parse_atom_role(j.at("role").get<std::string>());
        for (const auto & [key, value] : j.at("layers").items()) {
            atom.per_layer.emplace(parse_layer_key(key), vec_from_json(value));
        }
        if (j.contains("degenerate_layers")) {
            atom.degenerate_layers = j.at("degenerate_layers").get<std::set<int>>();
        }
        if (j.contains("provenance")) {
            atom.provenance = j.at("provenance");
        }
    } catch (const json::exception & ex) {
        fail(ErrorCode::InvalidConfig, fmt::format("atom file: {}", ex.what()));
    }
    return atom;
}

json direction_to_json(const RefusalDirection & direction) {
    json layers = json::object();
    for (const auto & [layer, dirty] : direction.dirty) {
        json entry = {{"dirty", dirty.raw()}};
        if (auto it = direction.clean.find(layer); it != direction.clean.end()) {
            entry["clean"] = it->second.raw();
        }
        if (auto it = direction.fit.find(layer); it != direction.fit.end()) {
            entry["fit"] = {{"coefficients", it->second.coefficients.raw()},
                            {"basis", direction.basis.at(layer)},
                            {"r_squared", it->second.r_squared},
                            {"r_squared_clamped", it->second.r_squared_clamped},
                            {"lambda", it->second.lambda}};
        }
        layers[std::to_string(layer)] = std::move(entry);
    }
    return {{"normalize_atoms", direction.normalize_atoms}, {"layers", std::move(layers)}};
}

RefusalDirection direction_from_json(const json & j) {
    RefusalDirection d;
    try {
        d.normalize_atoms = j.value("normalize_atoms", true);
        for (const auto & [key, entry] : j.at("layers").items()) {
            const int layer = parse_layer_key(key);
            d.dirty.emplace(layer, vec_from_json(entry.at("dirty")));
            if (entry.contains("clean")) {
                d.clean.emplace(layer, vec_from_json(entry.at("clean")));
            }
            if (entry.contains("fit")) {
                const json & f = entry.at("fit");
                RegressionFit fit;
                fit.coefficients = vec_from_json(f.at("coefficients"));
                fit.r_squared = f.at("r_squared").get<double>();
                fit.r_squared_clamped = f.value("r_squared_clamped", false);
                fit.lambda = f.at("lambda").get<double>();
                fit.residual = d.clean.count(layer) ? d.clean.at(layer) : Vec{};
                d.fit.emplace(layer, std::move(fit));
                d.basis.emplace(layer, f.at("basis").get<std::vector<std::string>>());
            }
        }
    } catch (const json::exception & ex) {
        fail(ErrorCode::InvalidConfig, fmt::format("direction file: {}", ex.what()));
    }
    return d;
}

} // namespace sra
