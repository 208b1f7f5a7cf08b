// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sra/linalg.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sra {

// Which token positions of a prompt feed its aggregated vector.
enum class Aggregation { last_token, mean_tokens };

std::string_view to_string(Aggregation agg) noexcept;
Aggregation parse_aggregation(std::string_view s);

// Per-layer, per-prompt aggregated residual-stream vectors for one prompt set.
// Each layer holds a num_prompts x hidden_dim matrix; prompt indices are the
// row indices, so the dump is rectangular by construction.
struct ActivationDump {
    std::string model_id;
    std::string prompt_set_id;
    Aggregation aggregation = Aggregation::last_token;
    std::size_t hidden_dim = 0;
    std::size_t num_prompts = 0;
    std::map<int, Mat> layers;

    std::vector<int> layer_ids() const;
    bool has_layer(int layer) const { return layers.count(layer) != 0; }
    Vec vector(int layer, std::size_t prompt_index) const;

    // Errors: ShapeMismatch (non-rectangular), NonFiniteInput.
    void validate() const;
};

// Mean over prompts at one layer. Each component is an exactly rounded sum
// divided by the prompt count, so the result is bit-reproducible and
// independent of prompt order.
//
// Errors: UnknownLayer, EmptyDump.
Vec mean_activation(const ActivationDump & dump, int layer);

// Errors: CorruptHeader, ShapeMismatch, UnsupportedVersion, Io.
ActivationDump read_dump(const std::filesystem::path & path);
void write_dump(const ActivationDump & dump, const std::filesystem::path & path);

} // namespace sra
