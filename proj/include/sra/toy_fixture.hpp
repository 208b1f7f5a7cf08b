// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// The shipped synthetic testbed: a seeded toy model with a planted refusal
// feature, optionally entangled with a planted capability feature.
//
//   capability: digits '0'..'9' write strength_a * a; digit logits read a
//   refusal:    '~' writes strength_s * (s + entangle * a); NAK reads s
//
// s and a are unit, orthogonal, and drawn from the model seed.

#pragma once

#include "sra/toy_model.hpp"

#include <json.hpp>

#include <string>

namespace sra {

enum class PlantKind { none, refusal, entangled };

struct ToyFixtureSpec {
    ToyConfig config;
    PlantKind plant = PlantKind::entangled;
    int layer = 4;
    double refusal_strength = 12.0;
    double capability_strength = 8.0;
    double entangle = 0.3;
    double refusal_gain = kDefaultRefusalReadoutGain;
    double capability_gain = 0.5;
    int trigger_token = '~';

    nlohmann::json to_json() const;
    // Missing keys keep their defaults. Errors: InvalidConfig.
    static ToyFixtureSpec from_json(const nlohmann::json & j);
};

struct ToyFixture {
    WeightSet base;    // seeded, nothing planted
    WeightSet planted;
    Vec refusal_direction;    // s
    Vec capability_direction; // a
};

ToyFixture build_toy_fixture(const ToyFixtureSpec & spec);

} // namespace sra
