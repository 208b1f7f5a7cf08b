// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// A small seeded decoder-only transformer over byte tokens.
//
// Block layout (pre-norm, no dropout):
//   x   = tok_emb[t] + pos_emb[i]
//   x  += attn_out . MHA(rmsnorm(x) * attn_norm)          causal, no biases
//   x  += mlp_down . gelu(mlp_up . (rmsnorm(x) * mlp_norm) + mlp_up_bias)
//   logits = unembed . (rmsnorm(x) * final_norm)
//
// Residuals are captured after each block. Layers are numbered from 0.

#pragma once

#include "sra/activation_store.hpp"
#include "sra/linalg.hpp"
#include "sra/weight_editor.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sra {

struct ToyConfig {
    int vocab = 256;
    int d_model = 64;
    int n_layers = 8;
    int n_heads = 4;
    int ff_dim = 256;
    int max_seq = 128;
    std::uint64_t seed = 42;

    // Errors: InvalidConfig.
    void validate() const;
    nlohmann::json to_json() const;
    static ToyConfig from_json(const nlohmann::json & j);
};

// SplitMix64 with the standard constants; normals via Box-Muller, both
// variates of each pair used in order.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() noexcept;
    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    double normal() noexcept;

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Token that the planted refusal feature promotes (ASCII NAK).
inline constexpr int kRefuseToken = 0x15;

// Weights drawn from SplitMix64(config.seed) in a fixed tensor order and
// rounded to float32, so identical seeds give byte-identical sets.
WeightSet seed_model(const ToyConfig & config);

std::vector<int> encode_bytes(std::string_view text);
std::string decode_bytes(std::span<const int> tokens);

struct ForwardTrace {
    Mat logits;                   // seq x vocab
    std::map<int, Mat> residuals; // layer -> seq x d_model
};

class ToyModel {
public:
    explicit ToyModel(WeightSet weights);
    ToyModel(const ToyModel & other);
    ToyModel & operator=(const ToyModel & other);
    ToyModel(ToyModel &&) noexcept = default;
    ToyModel & operator=(ToyModel &&) noexcept = default;

    const ToyConfig & config() const noexcept { return config_; }
    const WeightSet & weights() const noexcept { return weights_; }

    // Errors: TokenOutOfRange, SequenceTooLong, InvalidArgument (empty input).
    ForwardTrace forward(std::span<const int> tokens) const;

    // Logits of the next token after the full input.
    Vec next_logits(std::span<const int> tokens) const;
    Vec next_probs(std::span<const int> tokens) const;

    // log p(tokens[i+1] | tokens[..i]) for i = 0 .. n-2.
    std::vector<double> target_logprobs(std::span<const int> tokens) const;

    // Greedy decoding; ties go to the lowest token id. Stops early when the
    // context reaches max_seq.
    std::vector<int> generate(std::span<const int> prompt, int max_new) const;

    // Mean next-token NLL over every prediction in the corpus.
    double mean_nll(std::span<const std::vector<int>> corpus) const;

    // Gradient of mean_nll with respect to one mlp_down or attn_out matrix.
    // Errors: UnknownWeightId, InvalidArgument (other tensor kinds).
    Mat gradient(std::span<const std::vector<int>> corpus, const std::string & weight_id) const;

private:
    struct LayerRefs {
        const Mat * attn_norm;
        const Mat * q;
        const Mat * k;
        const Mat * v;
        const Mat * out;
        const Mat * mlp_norm;
        const Mat * up;
        const Mat * up_bias;
        const Mat * down;
    };
    struct Cache;

    void bind();
    void check_tokens(std::span<const int> tokens) const;
    // Runs the blocks and returns the final residual stream (seq x d).
    Mat run_blocks(std::span<const int> tokens, std::map<int, Mat> * residuals, std::vector<Cache> * caches) const;
    Mat final_logits(const Mat & x, std::size_t first_row) const;

    ToyConfig config_;
    WeightSet weights_;
    const Mat * tok_emb_ = nullptr;
    const Mat * pos_emb_ = nullptr;
    const Mat * final_norm_ = nullptr;
    const Mat * unembed_ = nullptr;
    std::vector<LayerRefs> layers_;
};

ForwardTrace forward_capture(const WeightSet & weights, std::span<const int> tokens);
std::vector<int> greedy_generate(const WeightSet & weights, std::span<const int> prompt, int max_new);

// A synthetic feature: whenever one of the trigger tokens is the current
// token, one dedicated MLP unit at `layer` fires and writes
// strength * write_direction into the residual stream. The unembedding rows
// of readout_tokens gain readout_gain * readout_direction.
struct PlantSpec {
    int layer = 0;
    std::vector<int> trigger_tokens;
    Vec write_direction;
    double strength = 0.0;
    Vec readout_direction;
    std::vector<int> readout_tokens;
    double readout_gain = 0.0;
};

// Units are taken from the top of the layer's MLP downward and recorded in
// config["plants"]. strength == 0 leaves the weights unchanged.
// Errors: UnknownLayer, TokenOutOfRange, DimensionMismatch, InvalidConfig
// (no free MLP units left).
WeightSet plant_feature(const WeightSet & weights, const PlantSpec & spec);

inline constexpr double kDefaultRefusalReadoutGain = 0.75;

// Single-direction refusal feature: trigger writes strength * d at `layer`
// and d is read out into refuse_token. Errors: NotUnitVector plus those of
// plant_feature.
WeightSet plant_direction(const WeightSet & weights, int layer, const Vec & d, double strength, int trigger_token,
                          int refuse_token = kRefuseToken, double readout_gain = kDefaultRefusalReadoutGain);

// Captures the post-block residual at the requested layers for each prompt
// (byte-encoded) and aggregates per prompt.
ActivationDump capture_dump(const ToyModel & model, std::span<const std::string> prompts, std::span<const int> layers,
                            Aggregation aggregation, const std::string & prompt_set_id);

} // namespace sra
