// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include "sra/activation_store.hpp"
#include "sra/digest.hpp"
#include "sra/error.hpp"
#include "sra/log.hpp"
#include "sra/metrics.hpp"
#include "sra/pipeline.hpp"
#include "sra/registry.hpp"
#include "sra/tensor_file.hpp"
#include "sra/toy_fixture.hpp"
#include "sra/toy_model.hpp"
#include "sra/weight_editor.hpp"

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#ifndef SRA_VERSION
#define SRA_VERSION "0.0.0"
#endif

namespace sra::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

int parse_int(const std::string & s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        fail(ErrorCode::InvalidArgument, fmt::format("bad layer '{}'", s));
    }
    return v;
}

// "4,5,9" or "4-7" or a mix; sorted, duplicates removed.
std::vector<int> parse_layers(const std::string & spec) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start <= spec.size()) {
        const std::size_t comma = std::min(spec.find(',', start), spec.size());
        const std::string item = spec.substr(start, comma - start);
        if (const auto dash = item.find('-'); dash != std::string::npos && dash > 0) {
            const int lo = parse_int(item.substr(0, dash));
            const int hi = parse_int(item.substr(dash + 1));
            if (hi < lo) {
                fail(ErrorCode::InvalidArgument, fmt::format("bad layer range '{}'", item));
            }
            for (int l = lo; l <= hi; ++l) {
                out.push_back(l);
            }
        } else {
            out.push_back(parse_int(item));
        }
        start = comma + 1;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::string> split_list(const std::string & s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t comma = std::min(s.find(',', start), s.size());
        if (comma > start) {
            out.push_back(s.substr(start, comma - start));
        }
        start = comma + 1;
    }
    return out;
}

void write_text(const fs::path & path, const std::string & text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
    }
    out << text;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now));
}

struct Invocation {
    std::string command;
    std::vector<std::string> argv;
    fs::path out;
    bool out_is_dir = false;
    bool force = false;
    std::optional<std::uint64_t> seed;
    std::vector<fs::path> config_paths;
    // Files or directories the command will write, relative to out when it is
    // a directory. Only these are removed by --force.
    std::vector<fs::path> owned;
};

fs::path manifest_path(const Invocation & inv) {
    if (inv.out_is_dir) {
        return inv.out / "manifest.json";
    }
    return fs::path(inv.out.string() + ".manifest.json");
}

void prepare_output(const Invocation & inv) {
    if (!fs::exists(inv.out)) {
        return;
    }
    if (!inv.force) {
        fail(ErrorCode::OutputExists, fmt::format("'{}' exists; pass --force to overwrite", inv.out.string()));
    }
    if (!inv.out_is_dir) {
        if (fs::is_directory(inv.out)) {
            fail(ErrorCode::OutputExists, fmt::format("'{}' is a directory", inv.out.string()));
        }
        return;
    }
    if (!fs::is_directory(inv.out)) {
        fail(ErrorCode::OutputExists, fmt::format("'{}' is not a directory", inv.out.string()));
    }
    for (const auto & rel : inv.owned) {
        fs::remove_all(inv.out / rel);
    }
    fs::remove(manifest_path(inv));
}

std::vector<std::string> list_outputs(const Invocation & inv) {
    std::vector<std::string> out;
    if (!inv.out_is_dir) {
        if (fs::exists(inv.out)) {
            out.push_back(inv.out.string());
        }
        return out;
    }
    const fs::path manifest = manifest_path(inv);
    for (const auto & e : fs::recursive_directory_iterator(inv.out)) {
        if (e.is_regular_file() && e.path() != manifest) {
            out.push_back(e.path().string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

void write_manifest(const Invocation & inv, const ordered_json & j) {
    write_text(manifest_path(inv), j.dump(2) + "\n");
}

using InputsFn = std::function<std::vector<fs::path>()>;
using BodyFn = std::function<void(ordered_json & manifest)>;

int exit_code_for(ErrorCode code) {
    return is_numerical(code) ? kExitNumerical : kExitValidation;
}

// Output check, manifest (status "running" with input hashes), body, then the
// final manifest with status and outputs.
int execute(const Invocation & inv, const InputsFn & inputs, const BodyFn & body) {
    try {
        prepare_output(inv);
    } catch (const Error & e) {
        log_message(LogLevel::error, e.what());
        return exit_code_for(e.code());
    }
    ordered_json manifest;
    manifest["command"] = inv.command;
    manifest["argv"] = inv.argv;
    manifest["tool_version"] = SRA_VERSION;
    manifest["timestamp"] = utc_timestamp();
    manifest["seed"] = inv.seed ? json(*inv.seed) : json(nullptr);
    std::vector<std::string> configs;
    for (const auto & p : inv.config_paths) {
        configs.push_back(p.string());
    }
    manifest["config_paths"] = configs;
    manifest["inputs"] = ordered_json::object();
    manifest["outputs"] = ordered_json::array();
    manifest["status"] = "running";

    int code = kExitOk;
    try {
        if (inv.out_is_dir) {
            fs::create_directories(inv.out);
        } else if (inv.out.has_parent_path()) {
            fs::create_directories(inv.out.parent_path());
        }
        for (const auto & p : inv.config_paths) {
            manifest["inputs"][p.string()] = fs::is_regular_file(p) ? json(sha256_file(p)) : json(nullptr);
        }
        write_manifest(inv, manifest);
        for (const auto & p : inputs()) {
            manifest["inputs"][p.string()] = fs::is_regular_file(p) ? json(sha256_file(p)) : json(nullptr);
        }
        write_manifest(inv, manifest);
        body(manifest);
        manifest["status"] = "ok";
    } catch (const Error & e) {
        log_message(LogLevel::error, e.what());
        manifest["status"] = "failed";
        manifest["error"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
        code = exit_code_for(e.code());
    } catch (const std::exception & e) {
        log_message(LogLevel::error, e.what());
        manifest["status"] = "failed";
        manifest["error"] = {{"code", "Io"}, {"message", e.what()}};
        code = kExitValidation;
    }
    manifest["outputs"] = list_outputs(inv);
    try {
        write_manifest(inv, manifest);
    } catch (const std::exception & e) {
        log_message(LogLevel::error, e.what());
        return code == kExitOk ? kExitValidation : code;
    }
    return code;
}

// Atom files written by `atoms`: <dir>/index.json lists ids in registry order.
std::vector<ConceptAtom> read_atoms_dir(const fs::path & dir) {
    const fs::path index = dir / "index.json";
    if (!fs::is_regular_file(index)) {
        fail(ErrorCode::Io, fmt::format("no atom index at '{}'", index.string()));
    }
    std::vector<ConceptAtom> atoms;
    const json j = read_json_file(index);
    try {
        for (const auto & id : j.at("atoms")) {
            atoms.push_back(atom_from_json(read_json_file(dir / (id.get<std::string>() + ".json"))));
        }
    } catch (const json::exception & ex) {
        fail(ErrorCode::InvalidConfig, fmt::format("atom index: {}", ex.what()));
    }
    return atoms;
}

std::vector<fs::path> atom_inputs(const fs::path & dir) {
    std::vector<fs::path> out = {dir / "index.json"};
    if (fs::is_regular_file(dir / "index.json")) {
        try {
            for (const auto & id : read_json_file(dir / "index.json").at("atoms")) {
                out.push_back(dir / (id.get<std::string>() + ".json"));
            }
        } catch (const std::exception &) {
        }
    }
    return out;
}

std::vector<int> layers_or(const std::string & spec, std::vector<int> fallback) {
    return spec.empty() ? fallback : parse_layers(spec);
}

template <typename Map>
std::vector<int> keys_of(const Map & m) {
    std::vector<int> out;
    for (const auto & [k, v] : m) {
        out.push_back(k);
    }
    return out;
}

// Mean Target atom norm per layer, skipping degenerate layers.
std::map<int, double> target_norms(const std::vector<ConceptAtom> & atoms, const std::vector<int> & layers) {
    std::map<int, double> out;
    for (int layer : layers) {
        std::vector<double> norms;
        for (const auto & a : atoms) {
            if (a.role == AtomRole::Target && a.degenerate_layers.count(layer) == 0) {
                auto it = a.per_layer.find(layer);
                if (it == a.per_layer.end()) {
                    fail(ErrorCode::UnknownLayer, fmt::format("atom '{}' has no layer {}", a.atom_id, layer));
                }
                norms.push_back(norm(it->second));
            }
        }
        if (!norms.empty()) {
            out[layer] = exact_sum(norms) / static_cast<double>(norms.size());
        }
    }
    return out;
}

struct Common {
    std::string out;
    bool force = false;
};

void add_common(CLI::App * sub, Common & c) {
    sub->add_option("--out", c.out, "Output path")->required();
    sub->add_flag("--force", c.force, "Overwrite existing output");
}

} // namespace

int run_cli(const std::vector<std::string> & args) {
    CLI::App app{"Refusal-direction cleaning and rank-one weight editing toolkit", "sra"};
    app.set_version_flag("--version", SRA_VERSION);
    app.require_subcommand(1);

    Common common;
    std::optional<std::uint64_t> seed;
    std::string layers_spec;

    // toy-init
    std::string plant = "entangled";
    std::string fixture_path;
    auto * toy_init = app.add_subcommand("toy-init", "Write the seeded toy model weights");
    add_common(toy_init, common);
    toy_init->add_option("--seed", seed, "Model seed");
    toy_init->add_option("--plant", plant, "none, refusal or entangled")
        ->check(CLI::IsMember({"none", "refusal", "entangled"}));
    toy_init->add_option("--fixture", fixture_path, "Fixture spec JSON (overrides --plant)");

    // dump
    std::string weights_path;
    std::string prompts_path;
    std::string registry_path;
    std::string agg = "last_token";
    std::string prompt_set_id;
    auto * dump = app.add_subcommand("dump", "Capture activations of a weight container");
    add_common(dump, common);
    dump->add_option("--weights", weights_path, "Weight container")->required();
    auto * dump_prompts = dump->add_option("--prompts", prompts_path, "Prompt file; writes one dump to --out");
    auto * dump_registry =
        dump->add_option("--registry", registry_path, "Registry; writes <id>.pos.acts/<id>.neg.acts under --out");
    dump_prompts->excludes(dump_registry);
    dump->add_option("--layers", layers_spec, "Layers, e.g. 4-7 or 4,6")->required();
    dump->add_option("--agg", agg, "last_token or mean_tokens");
    dump->add_option("--id", prompt_set_id, "Prompt set id recorded in the dump");

    // atoms
    std::string dumps_dir;
    auto * atoms = app.add_subcommand("atoms", "Compute concept atoms from registry dumps");
    add_common(atoms, common);
    atoms->add_option("--registry", registry_path, "Registry JSON")->required();
    atoms->add_option("--dumps", dumps_dir, "Directory with <id>.pos.acts and <id>.neg.acts")->required();
    atoms->add_option("--layers", layers_spec, "Layers (default: all layers in the dumps)");

    // dirty
    std::string harmful_path;
    std::string harmless_path;
    auto * dirty = app.add_subcommand("dirty", "Difference-of-means refusal direction");
    add_common(dirty, common);
    dirty->add_option("--harmful", harmful_path, "Harmful activation dump")->required();
    dirty->add_option("--harmless", harmless_path, "Harmless activation dump")->required();
    dirty->add_option("--layers", layers_spec, "Layers (default: all layers in the dumps)");

    // clean
    std::string direction_path;
    std::string atoms_dir;
    std::optional<double> lambda;
    double relative_lambda = 1e-3;
    bool raw_atoms = false;
    auto * clean = app.add_subcommand("clean", "Residualize a direction against the protected atoms");
    add_common(clean, common);
    clean->add_option("--dirty", direction_path, "Direction JSON")->required();
    clean->add_option("--atoms", atoms_dir, "Atom directory")->required();
    clean->add_option("--lambda", lambda, "Absolute ridge strength");
    clean->add_option("--relative-lambda", relative_lambda, "Ridge strength relative to mean(diag(A^T A))");
    clean->add_flag("--raw-atoms", raw_atoms, "Do not unit-normalize atom columns");

    // edit
    std::optional<double> gamma;
    std::optional<double> gamma_median;
    double gamma_cap = 1.0;
    std::string kinds = "mlp_down,attn_out";
    std::string use = "auto";
    auto * edit = app.add_subcommand("edit", "Apply rank-one projection edits");
    add_common(edit, common);
    edit->add_option("--weights", weights_path, "Weight container")->required();
    edit->add_option("--direction", direction_path, "Direction JSON")->required();
    edit->add_option("--layers", layers_spec, "Layers (default: all layers in the direction)");
    edit->add_option("--kinds", kinds, "Weight kinds to edit");
    edit->add_option("--use", use, "auto, clean or dirty")->check(CLI::IsMember({"auto", "clean", "dirty"}));
    auto * edit_gamma = edit->add_option("--gamma", gamma, "Fixed gamma at every layer");
    auto * edit_median = edit->add_option("--gamma-median", gamma_median, "Median gamma from Target atom norms");
    edit_gamma->excludes(edit_median);
    edit->add_option("--gamma-cap", gamma_cap, "Gamma cap");
    edit->add_option("--atoms", atoms_dir, "Atom directory (with --gamma-median)");

    // eval
    std::vector<std::string> edited_specs;
    std::vector<std::string> corpora;
    std::string rubric_path;
    std::size_t kl_length = 16;
    bool kl_harmful = false;
    int max_new = 4;
    auto * eval = app.add_subcommand("eval", "Drift report of edited models against the base");
    add_common(eval, common);
    eval->add_option("--base", weights_path, "Base weight container")->required();
    eval->add_option("--edited", edited_specs, "state=path, state in {standard, sra}")->required();
    eval->add_option("--corpus", corpora, "Corpus text files")->required();
    eval->add_option("--harmful", harmful_path, "Harmful prompt file")->required();
    eval->add_option("--rubric", rubric_path, "Rubric ruleset JSON")->required();
    eval->add_option("--kl-length", kl_length, "KL context length");
    eval->add_flag("--kl-harmful", kl_harmful, "Include harmful prompts in the KL mean");
    eval->add_option("--max-new", max_new, "Tokens generated per harmful prompt");

    // run
    std::string config_path;
    auto * run = app.add_subcommand("run", "Full iterative pipeline from a config file");
    add_common(run, common);
    run->add_option("--config", config_path, "pipeline.json")->required();
    run->add_option("--seed", seed, "Seed override");
    run->add_option("--layers", layers_spec, "Target layer override");
    run->add_option("--lambda", lambda, "Absolute ridge strength override");
    run->add_option("--gamma-median", gamma_median, "Median gamma override");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp & e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp & e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion & e) {
        return app.exit(e);
    } catch (const CLI::ParseError & e) {
        app.exit(e);
        return kExitValidation;
    }

    Invocation inv;
    inv.argv = args;
    inv.out = common.out;
    inv.force = common.force;
    inv.seed = seed;

    if (*toy_init) {
        inv.command = "toy-init";
        if (!fixture_path.empty()) {
            inv.config_paths.push_back(fixture_path);
        }
        return execute(
            inv,
            [&] { return inv.config_paths; },
            [&](ordered_json & manifest) {
                ToyFixtureSpec spec;
                if (!fixture_path.empty()) {
                    spec = ToyFixtureSpec::from_json(read_json_file(fixture_path));
                } else if (plant == "none") {
                    spec.plant = PlantKind::none;
                } else if (plant == "refusal") {
                    spec.plant = PlantKind::refusal;
                }
                if (seed) {
                    spec.config.seed = *seed;
                }
                manifest["fixture"] = spec.to_json();
                write_weights(build_toy_fixture(spec).planted, inv.out);
            });
    }

    if (*dump) {
        inv.command = "dump";
        inv.out_is_dir = !registry_path.empty();
        if (prompts_path.empty() && registry_path.empty()) {
            log_message(LogLevel::error, "dump: one of --prompts or --registry is required");
            return kExitValidation;
        }
        std::vector<AtomSpec> specs;
        if (inv.out_is_dir) {
            inv.config_paths.push_back(registry_path);
            try {
                specs = load_registry(registry_path);
            } catch (const Error & e) {
                log_message(LogLevel::error, e.what());
                return exit_code_for(e.code());
            }
            for (const auto & s : specs) {
                inv.owned.push_back(s.atom_id + ".pos.acts");
                inv.owned.push_back(s.atom_id + ".neg.acts");
            }
        }
        return execute(
            inv,
            [&] {
                std::vector<fs::path> in = {weights_path};
                if (!inv.out_is_dir) {
                    in.push_back(prompts_path);
                }
                in.insert(in.end(), inv.config_paths.begin(), inv.config_paths.end());
                for (const auto & s : specs) {
                    in.push_back(s.positive_file);
                    in.push_back(s.negative_file);
                }
                return in;
            },
            [&](ordered_json &) {
                const ToyModel model(read_weights(weights_path));
                const std::vector<int> layers = parse_layers(layers_spec);
                const Aggregation aggregation = parse_aggregation(agg);
                if (!inv.out_is_dir) {
                    const std::string id = prompt_set_id.empty() ? fs::path(prompts_path).stem().string() : prompt_set_id;
                    write_dump(capture_dump(model, read_prompt_file(prompts_path), layers, aggregation, id), inv.out);
                    return;
                }
                for (const auto & s : specs) {
                    write_dump(capture_dump(model, read_prompt_file(s.positive_file), layers, aggregation,
                                            s.atom_id + ".pos"),
                               inv.out / (s.atom_id + ".pos.acts"));
                    write_dump(capture_dump(model, read_prompt_file(s.negative_file), layers, aggregation,
                                            s.atom_id + ".neg"),
                               inv.out / (s.atom_id + ".neg.acts"));
                }
            });
    }

    if (*atoms) {
        inv.command = "atoms";
        inv.out_is_dir = true;
        inv.config_paths.push_back(registry_path);
        inv.owned.push_back("index.json");
        if (fs::is_regular_file(inv.out / "index.json")) {
            for (const auto & p : atom_inputs(inv.out)) {
                inv.owned.push_back(p.filename());
            }
        }
        std::vector<AtomSpec> specs;
        return execute(
            inv,
            [&] {
                std::vector<fs::path> in = {registry_path};
                specs = load_registry(registry_path);
                for (const auto & s : specs) {
                    in.push_back(fs::path(dumps_dir) / (s.atom_id + ".pos.acts"));
                    in.push_back(fs::path(dumps_dir) / (s.atom_id + ".neg.acts"));
                }
                return in;
            },
            [&](ordered_json &) {
                std::vector<std::string> ids;
                for (const auto & s : specs) {
                    const ActivationDump pos = read_dump(fs::path(dumps_dir) / (s.atom_id + ".pos.acts"));
                    const ActivationDump neg = read_dump(fs::path(dumps_dir) / (s.atom_id + ".neg.acts"));
                    const std::vector<int> layers = layers_or(layers_spec, keys_of(pos.layers));
                    write_json_file(inv.out / (s.atom_id + ".json"), atom_to_json(compute_atom(s, pos, neg, layers)));
                    ids.push_back(s.atom_id);
                }
                if (ids.empty()) {
                    log_warn("registry '{}' has no atoms; writing an empty index", registry_path);
                }
                write_json_file(inv.out / "index.json", json{{"atoms", ids}});
            });
    }

    if (*dirty) {
        inv.command = "dirty";
        return execute(
            inv,
            [&] { return std::vector<fs::path>{harmful_path, harmless_path}; },
            [&](ordered_json &) {
                const ActivationDump harm = read_dump(harmful_path);
                const ActivationDump safe = read_dump(harmless_path);
                const std::vector<int> layers = layers_or(layers_spec, keys_of(harm.layers));
                RefusalDirection d;
                d.dirty = compute_refusal_direction(harm, safe, layers);
                write_json_file(inv.out, direction_to_json(d));
            });
    }

    if (*clean) {
        inv.command = "clean";
        return execute(
            inv,
            [&] {
                std::vector<fs::path> in = {direction_path};
                const auto a = atom_inputs(atoms_dir);
                in.insert(in.end(), a.begin(), a.end());
                return in;
            },
            [&](ordered_json & manifest) {
                const RefusalDirection d = direction_from_json(read_json_file(direction_path));
                const std::vector<ConceptAtom> registry = read_atoms_dir(atoms_dir);
                RidgeOptions opt;
                opt.lambda = lambda;
                opt.relative_lambda = relative_lambda;
                opt.normalize_atoms = !raw_atoms;
                const RefusalDirection out = clean_direction(d.dirty, registry, opt);
                ordered_json fits = ordered_json::object();
                for (const auto & [layer, fit] : out.fit) {
                    fits[std::to_string(layer)] = {{"r_squared", fit.r_squared}, {"lambda", fit.lambda}};
                }
                manifest["fits"] = fits;
                write_json_file(inv.out, direction_to_json(out));
            });
    }

    if (*edit) {
        inv.command = "edit";
        return execute(
            inv,
            [&] {
                std::vector<fs::path> in = {weights_path, direction_path};
                if (!atoms_dir.empty()) {
                    const auto a = atom_inputs(atoms_dir);
                    in.insert(in.end(), a.begin(), a.end());
                }
                return in;
            },
            [&](ordered_json & manifest) {
                if (!gamma && !gamma_median) {
                    fail(ErrorCode::InvalidArgument, "edit: one of --gamma or --gamma-median is required");
                }
                const WeightSet weights = read_weights(weights_path);
                const RefusalDirection d = direction_from_json(read_json_file(direction_path));
                const std::vector<int> layers = layers_or(layers_spec, keys_of(d.dirty));
                std::map<int, double> gammas;
                if (gamma) {
                    for (int layer : layers) {
                        gammas[layer] = *gamma;
                    }
                } else {
                    if (atoms_dir.empty()) {
                        fail(ErrorCode::InvalidArgument, "edit: --gamma-median needs --atoms");
                    }
                    const auto norms = target_norms(read_atoms_dir(atoms_dir), layers);
                    if (norms.empty()) {
                        log_warn("no Target atoms; using gamma {} at every layer", *gamma_median);
                        for (int layer : layers) {
                            gammas[layer] = std::min(*gamma_median, gamma_cap);
                        }
                    } else {
                        std::vector<double> values;
                        for (const auto & [layer, n] : norms) {
                            values.push_back(n);
                        }
                        const double scale = calibrate_gamma_scale(values, *gamma_median);
                        manifest["gamma_scale"] = scale;
                        for (int layer : layers) {
                            auto it = norms.find(layer);
                            gammas[layer] =
                                it == norms.end() ? 0.0 : semantic_energy_gamma(it->second, scale, gamma_cap).gamma;
                        }
                    }
                }
                EditPlan plan;
                ordered_json applied = ordered_json::object();
                for (int layer : layers) {
                    const bool from_clean = use == "clean" || (use == "auto" && d.clean.count(layer) > 0);
                    const auto & source = from_clean ? d.clean : d.dirty;
                    auto it = source.find(layer);
                    if (it == source.end()) {
                        fail(ErrorCode::UnknownLayer,
                             fmt::format("direction has no {} vector at layer {}", from_clean ? "clean" : "dirty", layer));
                    }
                    const Vec v = normalized(it->second);
                    for (const auto & kind : split_list(kinds)) {
                        plan.entries.push_back({layer, layer_weight_id(layer, kind), v, gammas.at(layer)});
                    }
                    applied[std::to_string(layer)] = {{"gamma", gammas.at(layer)},
                                                      {"vector", from_clean ? "clean" : "dirty"}};
                }
                manifest["edits"] = applied;
                write_weights(apply_edit_plan(weights, plan), inv.out);
            });
    }

    if (*eval) {
        inv.command = "eval";
        inv.out_is_dir = true;
        inv.owned = {"drift.csv", "drift.json"};
        inv.config_paths.push_back(rubric_path);
        std::vector<std::pair<ModelState, fs::path>> edited_models;
        return execute(
            inv,
            [&] {
                std::vector<fs::path> in = {weights_path};
                for (const auto & spec : edited_specs) {
                    const auto eq = spec.find('=');
                    if (eq == std::string::npos) {
                        fail(ErrorCode::InvalidArgument, fmt::format("--edited '{}' is not state=path", spec));
                    }
                    std::string state = spec.substr(0, eq);
                    std::transform(state.begin(), state.end(), state.begin(),
                                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
                    const ModelState parsed = state == "sra"        ? ModelState::SRA
                                              : state == "standard" ? ModelState::Standard
                                                                    : parse_model_state(spec.substr(0, eq));
                    edited_models.emplace_back(parsed, spec.substr(eq + 1));
                    in.push_back(edited_models.back().second);
                }
                in.insert(in.end(), corpora.begin(), corpora.end());
                in.push_back(harmful_path);
                in.push_back(rubric_path);
                return in;
            },
            [&](ordered_json &) {
                const ToyModel base(read_weights(weights_path));
                std::vector<ToyModel> models;
                models.reserve(edited_models.size());
                for (const auto & [state, path] : edited_models) {
                    if (state == ModelState::Base) {
                        fail(ErrorCode::InvalidArgument, "--edited state must be standard or sra");
                    }
                    models.emplace_back(read_weights(path));
                }
                std::vector<NamedModel> named;
                for (std::size_t i = 0; i < models.size(); ++i) {
                    named.push_back({edited_models[i].first, &models[i]});
                }
                std::vector<NamedCorpus> loaded;
                for (const auto & c : corpora) {
                    loaded.push_back(load_corpus(c, base.config().max_seq));
                }
                DriftOptions opt;
                opt.kl_context_length = kl_length;
                opt.kl_include_harmful = kl_harmful;
                opt.max_new_tokens = max_new;
                const DriftReport report = build_drift_report(base, named, loaded, read_prompt_file(harmful_path),
                                                              load_ruleset(rubric_path), opt);
                write_text(inv.out / "drift.csv", drift_report_csv(report));
                write_text(inv.out / "drift.json", drift_report_json(report).dump(2) + "\n");
            });
    }

    inv.command = "run";
    inv.out_is_dir = true;
    inv.config_paths.push_back(config_path);
    inv.owned = {"passes", "directions", "weights", "baseline", "report", "plots", "summary.json"};
    std::optional<PipelineConfig> config;
    return execute(
        inv,
        [&] {
            json j = read_json_file(config_path);
            if (seed) {
                j["seed"] = *seed;
            }
            if (!layers_spec.empty()) {
                j["target_layers"] = parse_layers(layers_spec);
            }
            if (lambda) {
                j["ridge"]["lambda"] = *lambda;
            }
            if (gamma_median) {
                j["gamma"]["median"] = *gamma_median;
            }
            config = PipelineConfig::from_json(j, fs::path(config_path).parent_path());
            std::vector<fs::path> in = {config_path};
            if (config->weights_path) {
                in.push_back(config->resolve(*config->weights_path));
            }
            const fs::path registry = config->resolve(config->registry);
            in.push_back(registry);
            for (const auto & s : load_registry(registry)) {
                in.push_back(s.positive_file);
                in.push_back(s.negative_file);
            }
            in.push_back(config->resolve(config->harmful));
            in.push_back(config->resolve(config->harmless));
            in.push_back(config->resolve(config->rubric));
            for (const auto & c : config->corpora) {
                in.push_back(config->resolve(c));
            }
            return in;
        },
        [&](ordered_json & manifest) {
            manifest["seed"] = config->seed;
            manifest["effective_config"] = config->to_json();
            const PipelineData data = load_pipeline_data(*config);
            const PipelineSummary summary = run_pipeline(*config, data, inv.out);
            manifest["passes"] = summary.passes;
            manifest["stop"] = summary.stop;
        });
}

int main_entry(int argc, char ** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    try {
        return run_cli(args);
    } catch (const Error & e) {
        log_message(LogLevel::error, e.what());
        return exit_code_for(e.code());
    } catch (const std::exception & e) {
        log_message(LogLevel::error, e.what());
        return kExitValidation;
    }
}

} // namespace sra::cli
