// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/toy_fixture.hpp"

#include "sra/error.hpp"

#include <fmt/core.h>

namespace sra {

using nlohmann::json;

namespace {

std::string_view to_string(PlantKind kind) {
    switch (kind) {
        case PlantKind::none:      return "none";
        case PlantKind::refusal:   return "refusal";
        case PlantKind::entangled: return "entangled";
    }
    return "none";
}

PlantKind parse_plant_kind(const std::string & s) {
    for (auto kind : {PlantKind::none, PlantKind::refusal, PlantKind::entangled}) {
        if (s == to_string(kind)) {
            return kind;
        }
    }
    fail(ErrorCode::InvalidConfig, fmt::format("unknown plant kind '{}'", s));
}

Vec random_unit(SplitMix64 & rng, std::size_t dim) {
    Vec v(dim);
    for (double & x : v.values()) {
        x = rng.normal();
    }
    return normalized(v);
}

} // namespace

json ToyFixtureSpec::to_json() const {
    json j = config.to_json();
    j["plant"] = std::string(to_string(plant));
    j["plant_layer"] = layer;
    j["refusal_strength"] = refusal_strength;
    j["capability_strength"] = capability_strength;
    j["entangle"] = entangle;
    j["refusal_gain"] = refusal_gain;
    j["capability_gain"] = capability_gain;
    j["trigger_token"] = trigger_token;
    return j;
}

ToyFixtureSpec ToyFixtureSpec::from_json(const json & j) {
    ToyFixtureSpec s;
    s.config = ToyConfig::from_json(j);
    try {
        s.plant = parse_plant_kind(j.value("plant", std::string("entangled")));
        s.layer = j.value("plant_layer", s.layer);
        s.refusal_strength = j.value("refusal_strength", s.refusal_strength);
        s.capability_strength = j.value("capability_strength", s.capability_strength);
        s.entangle = j.value("entangle", s.entangle);
        s.refusal_gain = j.value("refusal_gain", s.refusal_gain);
        s.capability_gain = j.value("capability_gain", s.capability_gain);
        s.trigger_token = j.value("trigger_token", s.trigger_token);
    } catch (const json::exception & ex) {
        fail(ErrorCode::InvalidConfig, fmt::format("toy fixture: {}", ex.what()));
    }
    return s;
}

ToyFixture build_toy_fixture(const ToyFixtureSpec & spec) {
    ToyFixture fx;
    fx.base = seed_model(spec.config);
    const auto d = static_cast<std::size_t>(spec.config.d_model);

    SplitMix64 rng(spec.config.seed ^ 0xD1B54A32D192ED03ULL);
    fx.refusal_direction = random_unit(rng, d);
    Vec a = random_unit(rng, d);
    a = normalized(a - dot(a, fx.refusal_direction) * fx.refusal_direction);
    fx.capability_direction = a;

    fx.planted = fx.base;
    if (spec.plant == PlantKind::none) {
        return fx;
    }
    Vec write = fx.refusal_direction;
    if (spec.plant == PlantKind::entangled) {
        PlantSpec cap;
        cap.layer = spec.layer;
        for (int t = '0'; t <= '9'; ++t) {
            cap.trigger_tokens.push_back(t);
            cap.readout_tokens.push_back(t);
        }
        cap.write_direction = a;
        cap.strength = spec.capability_strength;
        cap.readout_direction = a;
        cap.readout_gain = spec.capability_gain;
        fx.planted = plant_feature(fx.planted, cap);
        write = write + spec.entangle * a;
    }
    PlantSpec ref;
    ref.layer = spec.layer;
    ref.trigger_tokens = {spec.trigger_token};
    ref.write_direction = write;
    ref.strength = spec.refusal_strength;
    ref.readout_direction = fx.refusal_direction;
    ref.readout_tokens = {kRefuseToken};
    ref.readout_gain = spec.refusal_gain;
    fx.planted = plant_feature(fx.planted, ref);
    fx.planted.config["fixture"] = spec.to_json();
    return fx;
}

} // namespace sra
