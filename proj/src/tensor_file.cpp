// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/tensor_file.hpp"

#include "sra/error.hpp"

#include <fmt/core.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sra {

using nlohmann::json;

namespace {

constexpr std::size_t kMagicSize = 8;
constexpr std::size_t kPreambleSize = 16;
constexpr int kFormatVersion = 1;

void put_u64_le(std::vector<std::uint8_t> & out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint64_t get_u64_le(const std::uint8_t * p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return v;
}

void put_f32_le(std::vector<std::uint8_t> & out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
}

float get_f32_le(const std::uint8_t * p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
        bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    }
    return std::bit_cast<float>(bits);
}

std::int64_t element_count(const std::vector<std::int64_t> & shape) {
    std::int64_t n = 1;
    for (auto s : shape) {
        if (s < 0) {
            fail(ErrorCode::ShapeMismatch, "negative tensor dimension");
        }
        n *= s;
    }
    return n;
}

void check_magic(std::string_view expected, std::string_view found) {
    if (found == expected) {
        return;
    }
    // Same family, other revision: e.g. SRAACT02 when SRAACT01 is expected.
    if (found.substr(0, 6) == expected.substr(0, 6)) {
        fail(ErrorCode::UnsupportedVersion,
             fmt::format("container revision '{}' is not supported (expected '{}')", found, expected));
    }
    fail(ErrorCode::CorruptHeader, fmt::format("bad magic: expected '{}'", expected));
}

} // namespace

std::vector<std::uint8_t> encode_tensor_file(std::string_view magic, const TensorFile & file) {
    if (magic.size() != kMagicSize) {
        fail(ErrorCode::InvalidArgument, "container magic must be 8 bytes");
    }
    if (!file.meta.is_object()) {
        fail(ErrorCode::InvalidArgument, "container metadata must be a JSON object");
    }

    json manifest = file.meta;
    manifest["version"] = kFormatVersion;
    json entries = json::array();
    std::uint64_t offset = 0;
    for (const auto & t : file.tensors) {
        const auto n = element_count(t.shape);
        if (static_cast<std::size_t>(n) != t.values.size()) {
            fail(ErrorCode::ShapeMismatch,
                 fmt::format("tensor '{}' declares {} elements but holds {}", t.name, n, t.values.size()));
        }
        const std::uint64_t len = static_cast<std::uint64_t>(n) * 4;
        entries.push_back({{"name", t.name},
                           {"dtype", "f32"},
                           {"shape", t.shape},
                           {"byte_offset", offset},
                           {"byte_length", len}});
        offset += len;
    }
    manifest["tensors"] = std::move(entries);
    const std::string text = manifest.dump();

    std::vector<std::uint8_t> out(magic.begin(), magic.end());
    out.reserve(kPreambleSize + text.size() + offset);
    put_u64_le(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto & t : file.tensors) {
        for (float f : t.values) {
            put_f32_le(out, f);
        }
    }
    return out;
}

TensorFile decode_tensor_file(std::string_view expected_magic, const std::vector<std::uint8_t> & bytes) {
    if (bytes.size() < kPreambleSize) {
        fail(ErrorCode::CorruptHeader, "file shorter than the 16-byte preamble");
    }
    check_magic(expected_magic, std::string_view(reinterpret_cast<const char *>(bytes.data()), kMagicSize));

    const std::uint64_t manifest_len = get_u64_le(bytes.data() + kMagicSize);
    if (manifest_len > bytes.size() - kPreambleSize) {
        fail(ErrorCode::CorruptHeader, fmt::format("manifest length {} exceeds file size", manifest_len));
    }
    const auto * manifest_begin = reinterpret_cast<const char *>(bytes.data() + kPreambleSize);
    json manifest = json::parse(manifest_begin, manifest_begin + manifest_len, nullptr, false);
    if (manifest.is_discarded() || !manifest.is_object()) {
        fail(ErrorCode::CorruptHeader, "manifest is not a JSON object");
    }
    if (auto v = manifest.find("version"); v != manifest.end() && *v != kFormatVersion) {
        fail(ErrorCode::UnsupportedVersion, fmt::format("manifest version {} is not supported", v->dump()));
    }
    auto entries_it = manifest.find("tensors");
    if (entries_it == manifest.end() || !entries_it->is_array()) {
        fail(ErrorCode::CorruptHeader, "manifest has no 'tensors' list");
    }

    const std::uint8_t * payload = bytes.data() + kPreambleSize + manifest_len;
    const std::uint64_t payload_len = bytes.size() - kPreambleSize - manifest_len;

    TensorFile file;
    std::uint64_t expected_offset = 0;
    try {
        for (const auto & e : *entries_it) {
            TensorBlock t;
            t.name = e.at("name").get<std::string>();
            const auto dtype = e.at("dtype").get<std::string>();
            if (dtype != "f32") {
                fail(ErrorCode::UnsupportedVersion, fmt::format("tensor '{}' has dtype '{}'", t.name, dtype));
            }
            t.shape = e.at("shape").get<std::vector<std::int64_t>>();
            const auto offset = e.at("byte_offset").get<std::uint64_t>();
            const auto length = e.at("byte_length").get<std::uint64_t>();
            if (offset != expected_offset) {
                fail(ErrorCode::CorruptHeader,
                     fmt::format("tensor '{}' starts at {}, expected {}", t.name, offset, expected_offset));
            }
            const auto n = element_count(t.shape);
            if (length != static_cast<std::uint64_t>(n) * 4) {
                fail(ErrorCode::ShapeMismatch,
                     fmt::format("tensor '{}' shape holds {} floats but byte_length is {}", t.name, n, length));
            }
            if (offset + length > payload_len) {
                fail(ErrorCode::CorruptHeader, fmt::format("tensor '{}' runs past the end of the payload", t.name));
            }
            t.values.resize(static_cast<std::size_t>(n));
            for (std::size_t i = 0; i < t.values.size(); ++i) {
                t.values[i] = get_f32_le(payload + offset + 4 * i);
            }
            expected_offset += length;
            file.tensors.push_back(std::move(t));
        }
    } catch (const json::exception & ex) {
        fail(ErrorCode::CorruptHeader, fmt::format("malformed tensor entry: {}", ex.what()));
    }
    if (expected_offset != payload_len) {
        fail(ErrorCode::CorruptHeader,
             fmt::format("manifest declares {} payload bytes but file holds {}", expected_offset, payload_len));
    }

    manifest.erase("tensors");
    manifest.erase("version");
    file.meta = std::move(manifest);
    return file;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::Io, fmt::format("cannot open '{}'", path.string()));
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path & path, const std::vector<std::uint8_t> & bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(ErrorCode::Io, fmt::format("short write to '{}'", path.string()));
    }
}

void write_tensor_file(const std::filesystem::path & path, std::string_view magic, const TensorFile & file) {
    write_file_bytes(path, encode_tensor_file(magic, file));
}

TensorFile read_tensor_file(const std::filesystem::path & path, std::string_view expected_magic) {
    return decode_tensor_file(expected_magic, read_file_bytes(path));
}

} // namespace sra
