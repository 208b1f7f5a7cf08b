// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/activation_store.hpp"

#include "sra/error.hpp"
#include "sra/tensor_file.hpp"

#include <fmt/core.h>

#include <charconv>

namespace sra {

using nlohmann::json;

std::string_view to_string(Aggregation agg) noexcept {
    return agg == Aggregation::last_token ? "last_token" : "mean_tokens";
}

Aggregation parse_aggregation(std::string_view s) {
    if (s == "last_token") {
        return Aggregation::last_token;
    }
    if (s == "mean_tokens") {
        return Aggregation::mean_tokens;
    }
    fail(ErrorCode::InvalidConfig, fmt::format("unknown aggregation '{}'", s));
}

std::vector<int> ActivationDump::layer_ids() const {
    std::vector<int> ids;
    ids.reserve(layers.size());
    for (const auto & [id, _] : layers) {
        ids.push_back(id);
    }
    return ids;
}

Vec ActivationDump::vector(int layer, std::size_t prompt_index) const {
    auto it = layers.find(layer);
    if (it == layers.end()) {
        fail(ErrorCode::UnknownLayer, fmt::format("dump '{}' has no layer {}", prompt_set_id, layer));
    }
    if (prompt_index >= num_prompts) {
        fail(ErrorCode::InvalidArgument,
             fmt::format("prompt index {} out of range for {} prompts", prompt_index, num_prompts));
    }
    return it->second.row_vec(prompt_index);
}

void ActivationDump::validate() const {
    for (const auto & [id, m] : layers) {
        if (m.rows() != num_prompts || m.cols() != hidden_dim) {
            fail(ErrorCode::ShapeMismatch,
                 fmt::format("layer {} is {}x{}, expected {}x{}", id, m.rows(), m.cols(), num_prompts, hidden_dim));
        }
        if (!m.all_finite()) {
            fail(ErrorCode::NonFiniteInput, fmt::format("layer {} holds non-finite activations", id));
        }
    }
}

Vec mean_activation(const ActivationDump & dump, int layer) {
    auto it = dump.layers.find(layer);
    if (it == dump.layers.end()) {
        fail(ErrorCode::UnknownLayer, fmt::format("dump '{}' has no layer {}", dump.prompt_set_id, layer));
    }
    if (dump.num_prompts == 0) {
        fail(ErrorCode::EmptyDump, fmt::format("dump '{}' holds no prompts", dump.prompt_set_id));
    }
    const Mat & m = it->second;
    const double n = static_cast<double>(m.rows());
    Vec mean(m.cols());
    std::vector<double> column(m.rows());
    for (std::size_t c = 0; c < m.cols(); ++c) {
        for (std::size_t p = 0; p < m.rows(); ++p) {
            column[p] = m(p, c);
        }
        mean[c] = exact_sum(column) / n;
    }
    return mean;
}

namespace {

std::string layer_tensor_name(int layer) {
    return fmt::format("layer.{}", layer);
}

int parse_layer_tensor_name(const std::string & name) {
    constexpr std::string_view prefix = "layer.";
    if (name.rfind(prefix, 0) != 0) {
        fail(ErrorCode::CorruptHeader, fmt::format("unexpected tensor '{}' in activation dump", name));
    }
    int layer = 0;
    const char * first = name.data() + prefix.size();
    const char * last = name.data() + name.size();
    auto [ptr, ec] = std::from_chars(first, last, layer);
    if (ec != std::errc() || ptr != last) {
        fail(ErrorCode::CorruptHeader, fmt::format("bad layer tensor name '{}'", name));
    }
    return layer;
}

} // namespace

ActivationDump read_dump(const std::filesystem::path & path) {
    TensorFile file = read_tensor_file(path, kActivationMagic);

    ActivationDump dump;
    try {
        const json & meta = file.meta;
        dump.model_id = meta.at("model_id").get<std::string>();
        dump.prompt_set_id = meta.at("prompt_set_id").get<std::string>();
        dump.aggregation = parse_aggregation(meta.at("aggregation").get<std::string>());
        dump.hidden_dim = meta.at("hidden_dim").get<std::size_t>();
        dump.num_prompts = meta.at("num_prompts").get<std::size_t>();
        const auto declared_layers = meta.at("layer_ids").get<std::vector<int>>();
        if (declared_layers.size() != file.tensors.size()) {
            fail(ErrorCode::CorruptHeader, "layer_ids does not match the tensor list");
        }
    } catch (const json::exception & ex) {
        fail(ErrorCode::CorruptHeader, fmt::format("activation manifest: {}", ex.what()));
    }

    for (auto & t : file.tensors) {
        const int layer = parse_layer_tensor_name(t.name);
        if (t.shape.size() != 2 || static_cast<std::size_t>(t.shape[0]) != dump.num_prompts ||
            static_cast<std::size_t>(t.shape[1]) != dump.hidden_dim) {
            fail(ErrorCode::ShapeMismatch, fmt::format("tensor '{}' is not {}x{}", t.name, dump.num_prompts,
                                                       dump.hidden_dim));
        }
        std::vector<double> widened(t.values.begin(), t.values.end());
        dump.layers.emplace(layer, Mat(dump.num_prompts, dump.hidden_dim, std::move(widened)));
    }
    dump.validate();
    return dump;
}

void write_dump(const ActivationDump & dump, const std::filesystem::path & path) {
    dump.validate();
    TensorFile file;
    file.meta = {{"model_id", dump.model_id},
                 {"prompt_set_id", dump.prompt_set_id},
                 {"aggregation", std::string(to_string(dump.aggregation))},
                 {"hidden_dim", dump.hidden_dim},
                 {"num_prompts", dump.num_prompts},
                 {"layer_ids", dump.layer_ids()}};
    for (const auto & [layer, m] : dump.layers) {
        TensorBlock t;
        t.name = layer_tensor_name(layer);
        t.shape = {static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())};
        t.values.assign(m.values().begin(), m.values().end());
        file.tensors.push_back(std::move(t));
    }
    write_tensor_file(path, kActivationMagic, file);
}

} // namespace sra
