// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/activation_store.hpp"
#include "sra/error.hpp"
#include "sra/linalg.hpp"
#include "sra/metrics.hpp"
#include "sra/pipeline.hpp"
#include "sra/registry.hpp"
#include "sra/toy_fixture.hpp"
#include "sra/toy_model.hpp"
#include "sra/weight_editor.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace sra;

namespace {

// Ruleset is a std::vector, which the STL casters would turn into a list.
struct Rubric {
    Ruleset rules;
};

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Vec to_vec(const Array & a) {
    if (a.ndim() != 1) {
        throw py::value_error("expected a 1-D array");
    }
    return Vec(std::vector<double>(a.data(), a.data() + a.size()));
}

Mat to_mat(const Array & a) {
    if (a.ndim() != 2) {
        throw py::value_error("expected a 2-D array");
    }
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return Mat(rows, cols, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> from_vec(const Vec & v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.dim()));
    std::memcpy(out.mutable_data(), v.raw().data(), v.dim() * sizeof(double));
    return out;
}

py::array_t<double> from_mat(const Mat & m) {
    py::array_t<double> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
    if (m.size() > 0) {
        std::memcpy(out.mutable_data(), m.values().data(), m.size() * sizeof(double));
    }
    return out;
}

std::vector<int> tokens_of(const py::object & o) {
    if (py::isinstance<py::str>(o)) {
        return encode_bytes(o.cast<std::string>());
    }
    if (py::isinstance<py::bytes>(o)) {
        return encode_bytes(std::string(o.cast<py::bytes>()));
    }
    return o.cast<std::vector<int>>();
}

std::vector<std::vector<int>> corpus_of(const py::iterable & items) {
    std::vector<std::vector<int>> out;
    for (const auto & item : items) {
        out.push_back(tokens_of(py::reinterpret_borrow<py::object>(item)));
    }
    return out;
}

py::dict dump_to_dict(const ActivationDump & d) {
    py::dict layers;
    for (const auto & [layer, m] : d.layers) {
        layers[py::int_(layer)] = from_mat(m);
    }
    py::dict out;
    out["model_id"] = d.model_id;
    out["prompt_set_id"] = d.prompt_set_id;
    out["aggregation"] = std::string(to_string(d.aggregation));
    out["hidden_dim"] = d.hidden_dim;
    out["num_prompts"] = d.num_prompts;
    out["layers"] = layers;
    return out;
}

ActivationDump dump_from_dict(const py::dict & d) {
    ActivationDump out;
    out.model_id = d["model_id"].cast<std::string>();
    out.prompt_set_id = d["prompt_set_id"].cast<std::string>();
    out.aggregation = parse_aggregation(d["aggregation"].cast<std::string>());
    for (const auto & [key, value] : d["layers"].cast<py::dict>()) {
        out.layers.emplace(key.cast<int>(), to_mat(value.cast<Array>()));
    }
    if (out.layers.empty()) {
        throw py::value_error("dump has no layers");
    }
    out.num_prompts = out.layers.begin()->second.rows();
    out.hidden_dim = out.layers.begin()->second.cols();
    out.validate();
    return out;
}

py::dict fit_to_dict(const RegressionFit & f) {
    py::dict out;
    out["coefficients"] = from_vec(f.coefficients);
    out["residual"] = from_vec(f.residual);
    out["r_squared"] = f.r_squared;
    out["lambda"] = f.lambda;
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Ridge cleaning of steering directions, rank-one weight edits and the toy transformer testbed";

    py::register_exception<Error>(m, "SraError", PyExc_RuntimeError);

    // linalg
    m.def(
        "ridge_solve", [](const Array & a, const Array & r, double lam) { return from_vec(ridge_solve(to_mat(a), to_vec(r), lam)); },
        py::arg("a"), py::arg("r"), py::arg("lam"), "Solve (A^T A + lam I) w = A^T r.");
    m.def(
        "residualize",
        [](const Array & r, const Array & a, double lam) { return fit_to_dict(residualize(to_vec(r), to_mat(a), lam)); },
        py::arg("r"), py::arg("a"), py::arg("lam"));
    m.def(
        "default_lambda", [](const Array & a, double relative) { return default_lambda(to_mat(a), relative); },
        py::arg("a"), py::arg("relative") = 1e-3);
    m.def("cosine", [](const Array & u, const Array & v) { return cosine(to_vec(u), to_vec(v)); });

    // weight editing
    m.def(
        "rank_one_update",
        [](const Array & w, const Array & v, double gamma) { return from_mat(rank_one_update(to_mat(w), to_vec(v), gamma)); },
        py::arg("w"), py::arg("v"), py::arg("gamma"), "W - gamma v (v^T W).");
    m.def(
        "predict_capability_drift",
        [](const Array & v, const Array & grad, double gamma) {
            return predict_capability_drift(to_vec(v), to_vec(grad), gamma);
        },
        py::arg("v"), py::arg("grad"), py::arg("gamma"));
    m.def("calibrate_gamma_scale", [](const std::vector<double> & norms, double median) {
        return calibrate_gamma_scale(norms, median);
    });

    py::class_<WeightSet>(m, "Weights")
        .def_static("load", &read_weights, py::arg("path"))
        .def("save", [](const WeightSet & w, const std::filesystem::path & p) { write_weights(w, p); }, py::arg("path"))
        .def("names", [](const WeightSet & w) {
            std::vector<std::string> out;
            for (const auto & [id, t] : w.tensors) {
                out.push_back(id);
            }
            return out;
        })
        .def("__contains__", &WeightSet::has)
        .def("__getitem__",
             [](const WeightSet & w, const std::string & id) {
                 const Mat & t = w.at(id);
                 return w.vectors.count(id) ? from_vec(t.row_vec(0)) : from_mat(t);
             })
        .def("__eq__", [](const WeightSet & a, const WeightSet & b) { return a == b; })
        .def_property_readonly("config", [](const WeightSet & w) { return w.config.dump(); })
        .def(
            "edit",
            [](const WeightSet & w, const std::vector<std::tuple<int, std::string, Array, double>> & entries) {
                EditPlan plan;
                for (const auto & [layer, kind, v, gamma] : entries) {
                    plan.entries.push_back({layer, layer_weight_id(layer, kind), to_vec(v), gamma});
                }
                return apply_edit_plan(w, plan);
            },
            py::arg("entries"), "Apply (layer, kind, unit v, gamma) rank-one edits; returns new weights.");

    // activation dumps
    m.def("read_dump", [](const std::filesystem::path & p) { return dump_to_dict(read_dump(p)); });
    m.def("write_dump", [](const py::dict & d, const std::filesystem::path & p) { write_dump(dump_from_dict(d), p); });
    m.def("mean_activation", [](const std::filesystem::path & p, int layer) {
        return from_vec(mean_activation(read_dump(p), layer));
    });

    // toy model
    py::class_<ToyModel>(m, "ToyModel")
        .def(py::init<WeightSet>(), py::arg("weights"))
        .def_static("seeded", [](std::uint64_t seed) { ToyConfig c; c.seed = seed; return ToyModel(seed_model(c)); },
                    py::arg("seed") = 42)
        .def_property_readonly("weights", &ToyModel::weights)
        .def_property_readonly("vocab", [](const ToyModel & t) { return t.config().vocab; })
        .def_property_readonly("d_model", [](const ToyModel & t) { return t.config().d_model; })
        .def_property_readonly("n_layers", [](const ToyModel & t) { return t.config().n_layers; })
        .def("next_probs", [](const ToyModel & t, const py::object & tokens) { return from_vec(t.next_probs(tokens_of(tokens))); })
        .def("generate",
             [](const ToyModel & t, const py::object & tokens, int max_new) { return t.generate(tokens_of(tokens), max_new); },
             py::arg("tokens"), py::arg("max_new"))
        .def("mean_nll", [](const ToyModel & t, const py::iterable & corpus) { return t.mean_nll(corpus_of(corpus)); })
        .def("ppl",
             [](const ToyModel & t, const py::iterable & corpus) {
                 return teacher_forced_ppl(logprob_source(t), corpus_of(corpus));
             })
        .def("capture",
             [](const ToyModel & t, const std::vector<std::string> & prompts, const std::vector<int> & layers,
                const std::string & agg) {
                 return dump_to_dict(capture_dump(t, prompts, layers, parse_aggregation(agg), "python"));
             },
             py::arg("prompts"), py::arg("layers"), py::arg("aggregation") = "last_token");
    m.attr("REFUSE_TOKEN") = kRefuseToken;

    m.def(
        "build_toy_fixture",
        [](std::uint64_t seed, const std::string & plant) {
            ToyFixtureSpec spec;
            spec.config.seed = seed;
            spec.plant = plant == "none" ? PlantKind::none : plant == "refusal" ? PlantKind::refusal : PlantKind::entangled;
            if (plant != "none" && plant != "refusal" && plant != "entangled") {
                throw py::value_error("plant must be none, refusal or entangled");
            }
            ToyFixture fx = build_toy_fixture(spec);
            py::dict out;
            out["base"] = std::move(fx.base);
            out["planted"] = std::move(fx.planted);
            out["refusal_direction"] = from_vec(fx.refusal_direction);
            out["capability_direction"] = from_vec(fx.capability_direction);
            return out;
        },
        py::arg("seed") = 42, py::arg("plant") = "entangled");

    // metrics
    m.def("first_token_kl", [](const Array & p, const Array & q) { return first_token_kl(to_vec(p), to_vec(q)); },
          py::arg("p_edit"), py::arg("p_base"));
    py::class_<Rubric>(m, "Ruleset")
        .def_static("load", [](const std::filesystem::path & p) { return Rubric{load_ruleset(p)}; }, py::arg("path"))
        .def("__len__", [](const Rubric & r) { return r.rules.size(); })
        .def("classify", [](const Rubric & r, const std::string & text) {
            return std::string(to_string(classify_refusal(text, r.rules).label));
        });

    // pipeline
    m.def(
        "run_pipeline",
        [](const std::filesystem::path & config_path, const std::filesystem::path & out_dir) {
            const PipelineConfig config = PipelineConfig::from_json(read_json_file(config_path), config_path.parent_path());
            const PipelineData data = load_pipeline_data(config);
            PipelineSummary s;
            {
                py::gil_scoped_release release;
                s = run_pipeline(config, data, out_dir);
            }
            py::dict out;
            out["passes"] = s.passes;
            out["stop"] = s.stop;
            out["refusal_trajectory"] = s.refusal_trajectory;
            out["baseline_passes"] = s.baseline_passes ? py::object(py::int_(*s.baseline_passes)) : py::none();
            return out;
        },
        py::arg("config"), py::arg("out_dir"));
}
