// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/weight_editor.hpp"

#include "sra/error.hpp"
#include "sra/log.hpp"
#include "sra/tensor_file.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace sra {

using nlohmann::json;

const Mat & WeightSet::at(const std::string & id) const {
    auto it = tensors.find(id);
    if (it == tensors.end()) {
        fail(ErrorCode::UnknownWeightId, fmt::format("no weight tensor '{}'", id));
    }
    return it->second;
}

Mat & WeightSet::at(const std::string & id) {
    auto it = tensors.find(id);
    if (it == tensors.end()) {
        fail(ErrorCode::UnknownWeightId, fmt::format("no weight tensor '{}'", id));
    }
    return it->second;
}

std::string layer_weight_id(int layer, const std::string & kind) {
    return fmt::format("layer.{}.{}", layer, kind);
}

namespace {

TensorFile to_tensor_file(const WeightSet & weights) {
    TensorFile file;
    file.meta = {{"config", weights.config}};
    for (const auto & [id, m] : weights.tensors) {
        TensorBlock t;
        t.name = id;
        if (weights.vectors.count(id) != 0) {
            t.shape = {static_cast<std::int64_t>(m.cols())};
        } else {
            t.shape = {static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())};
        }
        t.values.assign(m.values().begin(), m.values().end());
        file.tensors.push_back(std::move(t));
    }
    return file;
}

} // namespace

std::vector<std::uint8_t> encode_weights(const WeightSet & weights) {
    return encode_tensor_file(kWeightMagic, to_tensor_file(weights));
}

void write_weights(const WeightSet & weights, const std::filesystem::path & path) {
    write_tensor_file(path, kWeightMagic, to_tensor_file(weights));
}

WeightSet read_weights(const std::filesystem::path & path) {
    TensorFile file = read_tensor_file(path, kWeightMagic);
    WeightSet w;
    if (auto it = file.meta.find("config"); it != file.meta.end()) {
        w.config = *it;
    }
    for (auto & t : file.tensors) {
        std::vector<double> values(t.values.begin(), t.values.end());
        if (t.shape.size() == 1) {
            w.tensors.emplace(t.name, Mat(1, static_cast<std::size_t>(t.shape[0]), std::move(values)));
            w.vectors.insert(t.name);
        } else if (t.shape.size() == 2) {
            w.tensors.emplace(t.name, Mat(static_cast<std::size_t>(t.shape[0]), static_cast<std::size_t>(t.shape[1]),
                                          std::move(values)));
        } else {
            fail(ErrorCode::ShapeMismatch, fmt::format("weight '{}' has rank {}", t.name, t.shape.size()));
        }
    }
    return w;
}

namespace {

void check_unit(const Vec & v) {
    const double n = norm(v);
    if (!(std::abs(n - 1.0) <= 1e-9)) {
        fail(ErrorCode::NotUnitVector, fmt::format("edit direction has norm {:.12g}", n));
    }
}

void check_gamma(double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        fail(ErrorCode::InvalidArgument, fmt::format("gamma {} outside [0, 1]", gamma));
    }
}

} // namespace

Mat rank_one_update(const Mat & w, const Vec & v, double gamma) {
    if (v.dim() != w.rows()) {
        fail(ErrorCode::DimensionMismatch,
             fmt::format("direction dim {} != matrix output dim {}", v.dim(), w.rows()));
    }
    check_unit(v);
    check_gamma(gamma);
    Mat out = w;
    if (gamma == 0.0) {
        return out;
    }
    const Vec vt_w = matvec_transposed(w, v);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double s = gamma * v[r];
        auto row = out.row(r);
        for (std::size_t c = 0; c < w.cols(); ++c) {
            row[c] -= s * vt_w[c];
        }
    }
    return out;
}

void validate_edit_plan(const WeightSet & weights, const EditPlan & plan) {
    for (const auto & e : plan.entries) {
        const Mat & w = weights.at(e.weight_id);
        if (weights.vectors.count(e.weight_id) != 0) {
            fail(ErrorCode::ShapeMismatch, fmt::format("'{}' is not a matrix", e.weight_id));
        }
        if (e.direction.dim() != w.rows()) {
            fail(ErrorCode::DimensionMismatch, fmt::format("direction dim {} != rows {} of '{}'", e.direction.dim(),
                                                           w.rows(), e.weight_id));
        }
        check_unit(e.direction);
        check_gamma(e.gamma);
    }
}

WeightSet apply_edit_plan(const WeightSet & weights, const EditPlan & plan) {
    validate_edit_plan(weights, plan);
    WeightSet out = weights;
    for (const auto & e : plan.entries) {
        Mat & w = out.at(e.weight_id);
        w = rank_one_update(w, e.direction, e.gamma);
        log_debug("edited {} (layer {}) with gamma {:.4f}", e.weight_id, e.layer, e.gamma);
    }
    return out;
}

GammaChoice semantic_energy_gamma(const Vec & target_atom, double scale_c, double cap) {
    return semantic_energy_gamma(norm(target_atom), scale_c, cap);
}

GammaChoice semantic_energy_gamma(double atom_norm, double scale_c, double cap) {
    if (!(scale_c > 0.0) || !std::isfinite(scale_c)) {
        fail(ErrorCode::InvalidArgument, fmt::format("gamma scale must be positive, got {}", scale_c));
    }
    if (!(cap > 0.0 && cap <= 1.0)) {
        fail(ErrorCode::InvalidArgument, fmt::format("gamma cap {} outside (0, 1]", cap));
    }
    const double n = atom_norm;
    if (n == 0.0) {
        log_warn("zero target atom, gamma set to 0");
        return {0.0, true};
    }
    return {std::min(cap, scale_c * n), false};
}

double calibrate_gamma_scale(std::span<const double> norms, double median_gamma) {
    if (!(median_gamma > 0.0)) {
        fail(ErrorCode::InvalidArgument, fmt::format("median gamma must be positive, got {}", median_gamma));
    }
    std::vector<double> nz;
    for (double n : norms) {
        if (n > 0.0) {
            nz.push_back(n);
        }
    }
    if (nz.empty()) {
        fail(ErrorCode::ZeroNorm, "all target atom norms are zero; cannot calibrate gamma");
    }
    std::sort(nz.begin(), nz.end());
    const std::size_t m = nz.size() / 2;
    const double median = nz.size() % 2 == 1 ? nz[m] : 0.5 * (nz[m - 1] + nz[m]);
    return median_gamma / median;
}

double predict_capability_drift(const Vec & v, const Vec & grad, double gamma) {
    if (v.dim() != grad.dim()) {
        fail(ErrorCode::DimensionMismatch, fmt::format("direction dim {} != gradient dim {}", v.dim(), grad.dim()));
    }
    return -gamma * dot(v, grad);
}

} // namespace sra
