// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Tensor interchange container shared by activation dumps and weight sets.
//
// Layout (all integers little-endian):
//   8 bytes   magic, e.g. "SRAACT01" or "SRAWTS01"
//   8 bytes   u64 manifest length N
//   N bytes   UTF-8 JSON manifest
//   ...       payload: float32 blocks, contiguous, in manifest order
//
// The manifest is a JSON object holding free-form metadata plus
// "tensors": [{name, dtype: "f32", shape, byte_offset, byte_length}], with
// byte_offset relative to the start of the payload. Files are written in a
// canonical form (compact JSON with sorted keys), so reading and re-writing
// a conformant file reproduces it byte for byte.

#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sra {

inline constexpr std::string_view kActivationMagic = "SRAACT01";
inline constexpr std::string_view kWeightMagic = "SRAWTS01";

struct TensorBlock {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<float> values;
};

struct TensorFile {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<TensorBlock> tensors;
};

std::vector<std::uint8_t> encode_tensor_file(std::string_view magic, const TensorFile & file);
TensorFile decode_tensor_file(std::string_view expected_magic, const std::vector<std::uint8_t> & bytes);

void write_tensor_file(const std::filesystem::path & path, std::string_view magic, const TensorFile & file);
TensorFile read_tensor_file(const std::filesystem::path & path, std::string_view expected_magic);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path & path);
void write_file_bytes(const std::filesystem::path & path, const std::vector<std::uint8_t> & bytes);

} // namespace sra
