// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Concept atom registry: contrastive atom directions with roles, the dirty
// refusal direction, and ridge residualization of the latter against the
// protected (Shield + Confound) atoms.

#pragma once

#include "sra/activation_store.hpp"
#include "sra/linalg.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sra {

enum class AtomRole { Target, Shield, Confound };

std::string_view to_string(AtomRole role) noexcept;
AtomRole parse_atom_role(std::string_view s);

// Shields and Confounds form the regression basis; Targets never do.
inline bool is_protected(AtomRole role) noexcept {
    return role == AtomRole::Shield || role == AtomRole::Confound;
}

struct AtomSpec {
    std::string atom_id;
    AtomRole role = AtomRole::Shield;
    std::filesystem::path positive_file;
    std::filesystem::path negative_file;
};

// UTF-8 text, one prompt per line; blank lines are skipped and a trailing
// '\r' is dropped.
std::vector<std::string> read_prompt_file(const std::filesystem::path & path);

// Parses registry.json (a list of {atom_id, role, positive_file,
// negative_file}; prompt paths are relative to the manifest) and validates it.
// An empty list loads as an empty registry with a warning.
std::vector<AtomSpec> load_registry(const std::filesystem::path & manifest_path);

// Errors (InvalidRegistry): duplicate atom ids, missing prompt files, prompt
// files with fewer than two prompts.
void validate_registry(std::span<const AtomSpec> specs);

struct ConceptAtom {
    std::string atom_id;
    AtomRole role = AtomRole::Shield;
    std::map<int, Vec> per_layer;
    std::set<int> degenerate_layers;
    nlohmann::json provenance = nlohmann::json::object();
};

// Norm floor below which an atom is treated as collapsed: 1e-12 * sqrt(d).
double degenerate_norm_threshold(std::size_t dim) noexcept;

// per_layer[l] = mean(pos, l) - mean(neg, l). Near-zero layers are flagged in
// degenerate_layers with a warning rather than failing.
//
// Errors: DimensionMismatch, UnknownLayer, EmptyDump.
ConceptAtom compute_atom(const AtomSpec & spec, const ActivationDump & pos, const ActivationDump & neg,
                         std::span<const int> layers);

// mean(harm, l) - mean(safe, l) per requested layer.
std::map<int, Vec> compute_refusal_direction(const ActivationDump & harm, const ActivationDump & safe,
                                             std::span<const int> layers);

struct RidgeOptions {
    // Absolute ridge strength; when unset, relative_lambda * mean(diag(A^T A)).
    std::optional<double> lambda;
    double relative_lambda = 1e-3;
    // Unit-normalize atom columns before regression.
    bool normalize_atoms = true;
};

struct RefusalDirection {
    std::map<int, Vec> dirty;
    std::map<int, Vec> clean;
    std::map<int, RegressionFit> fit;
    // Atom ids forming the regression columns at each layer, in column order.
    std::map<int, std::vector<std::string>> basis;
    bool normalize_atoms = true;
};

// Regression basis at one layer: the non-degenerate Shield and Confound atoms
// in registry order, unit-normalized when requested. Returns a d x 0 matrix
// when no protected atom is usable. Errors: UnknownLayer, DimensionMismatch.
Mat protected_basis(int layer, std::size_t dim, std::span<const ConceptAtom> registry, bool normalize,
                    std::vector<std::string> * names = nullptr);

// Residualizes each dirty layer vector against protected_basis(layer).
//
// Errors: NoProtectedAtoms (registry has no Shield/Confound atom), plus
// anything ridge_solve raises.
RefusalDirection clean_direction(const std::map<int, Vec> & dirty, std::span<const ConceptAtom> registry,
                                 const RidgeOptions & options);

// dirty - A w rebuilt from the stored fit and the registry.
Vec reconstruct_clean(const RefusalDirection & direction, int layer, std::span<const ConceptAtom> registry);

nlohmann::json atom_to_json(const ConceptAtom & atom);
ConceptAtom atom_from_json(const nlohmann::json & j);
nlohmann::json direction_to_json(const RefusalDirection & direction);
RefusalDirection direction_from_json(const nlohmann::json & j);

nlohmann::json read_json_file(const std::filesystem::path & path);
// Writes pretty-printed JSON followed by a newline.
void write_json_file(const std::filesystem::path & path, const nlohmann::json & j);

} // namespace sra
