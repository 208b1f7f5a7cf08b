// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Rank-one projection edits on named weight matrices, and the semantic energy
// rule for edit strength.

#pragma once

#include "sra/linalg.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace sra {

// Named float tensors plus the model config they belong to. Matrices are
// stored output-major (rows = output dimension), so y = W x. One-dimensional
// tensors (gains, biases) are kept as 1 x n matrices and listed in `vectors`.
struct WeightSet {
    nlohmann::json config = nlohmann::json::object();
    std::map<std::string, Mat> tensors;
    std::set<std::string> vectors;

    bool has(const std::string & id) const { return tensors.count(id) != 0; }
    const Mat & at(const std::string & id) const;
    Mat & at(const std::string & id);

    bool operator==(const WeightSet &) const = default;
};

// Errors: CorruptHeader, ShapeMismatch, UnsupportedVersion, Io.
WeightSet read_weights(const std::filesystem::path & path);
void write_weights(const WeightSet & weights, const std::filesystem::path & path);
std::vector<std::uint8_t> encode_weights(const WeightSet & weights);

// Weight id of a per-layer matrix, e.g. "layer.4.mlp_down".
std::string layer_weight_id(int layer, const std::string & kind);

struct EditEntry {
    int layer = 0;
    std::string weight_id;
    Vec direction;
    double gamma = 0.0;
};

struct EditPlan {
    std::vector<EditEntry> entries;
};

// Errors: NotUnitVector, InvalidArgument (gamma outside [0, 1]),
// UnknownWeightId, DimensionMismatch (direction dim != rows).
void validate_edit_plan(const WeightSet & weights, const EditPlan & plan);

// W' = W - gamma * v (v^T W), without forming I - gamma v v^T.
//
// Errors: NotUnitVector (| ||v|| - 1 | > 1e-9), DimensionMismatch,
// InvalidArgument (gamma outside [0, 1]).
Mat rank_one_update(const Mat & w, const Vec & v, double gamma);

// Entries are applied in plan order; tensors not named are left untouched.
WeightSet apply_edit_plan(const WeightSet & weights, const EditPlan & plan);

struct GammaChoice {
    double gamma = 0.0;
    bool degenerate = false;
};

// gamma = min(cap, scale_c * ||target_atom||). A zero atom yields gamma 0 and
// a warning. Errors: InvalidArgument (scale_c <= 0, cap outside (0, 1]).
GammaChoice semantic_energy_gamma(const Vec & target_atom, double scale_c, double cap);
// Same rule from a precomputed atom norm.
GammaChoice semantic_energy_gamma(double atom_norm, double scale_c, double cap);

// scale_c such that the median of scale_c * norm over the given norms equals
// median_gamma. Zero norms are ignored; errors with ZeroNorm when none remain.
double calibrate_gamma_scale(std::span<const double> norms, double median_gamma);

// First-order loss change of moving the parameters by -gamma * v:
// -gamma * <v, grad>. Errors: DimensionMismatch.
double predict_capability_drift(const Vec & v, const Vec & grad, double gamma);

} // namespace sra
