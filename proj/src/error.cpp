// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/error.hpp"
#include "sra/log.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace sra {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::SingularSystem:     return "SingularSystem";
        case ErrorCode::NonFiniteInput:     return "NonFiniteInput";
        case ErrorCode::ZeroNorm:           return "ZeroNorm";
        case ErrorCode::NotADistribution:   return "NotADistribution";
        case ErrorCode::SupportViolation:   return "SupportViolation";
        case ErrorCode::DimensionMismatch:  return "DimensionMismatch";
        case ErrorCode::InvalidArgument:    return "InvalidArgument";
        case ErrorCode::UnknownLayer:       return "UnknownLayer";
        case ErrorCode::EmptyDump:          return "EmptyDump";
        case ErrorCode::CorruptHeader:      return "CorruptHeader";
        case ErrorCode::ShapeMismatch:      return "ShapeMismatch";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::NoProtectedAtoms:   return "NoProtectedAtoms";
        case ErrorCode::InvalidRegistry:    return "InvalidRegistry";
        case ErrorCode::NotUnitVector:      return "NotUnitVector";
        case ErrorCode::UnknownWeightId:    return "UnknownWeightId";
        case ErrorCode::InvalidConfig:      return "InvalidConfig";
        case ErrorCode::TokenOutOfRange:    return "TokenOutOfRange";
        case ErrorCode::SequenceTooLong:    return "SequenceTooLong";
        case ErrorCode::EmptyCorpus:        return "EmptyCorpus";
        case ErrorCode::SequenceTooShort:   return "SequenceTooShort";
        case ErrorCode::OutputExists:       return "OutputExists";
        case ErrorCode::Io:                 return "Io";
    }
    return "Unknown";
}

bool is_numerical(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::SingularSystem:
        case ErrorCode::NonFiniteInput:
        case ErrorCode::ZeroNorm:
        case ErrorCode::NotADistribution:
        case ErrorCode::SupportViolation:
            return true;
        default:
            return false;
    }
}

Error::Error(ErrorCode code, const std::string & message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string & message) {
    throw Error(code, message);
}

namespace {

LogLevel parse_level(const char * s) {
    if (s == nullptr) {
        return LogLevel::warn;
    }
    if (std::strcmp(s, "error") == 0) return LogLevel::error;
    if (std::strcmp(s, "info") == 0)  return LogLevel::info;
    if (std::strcmp(s, "debug") == 0) return LogLevel::debug;
    return LogLevel::warn;
}

std::atomic<int> & threshold_storage() {
    static std::atomic<int> level{static_cast<int>(parse_level(std::getenv("SRA_LOG")))};
    return level;
}

} // namespace

LogLevel log_threshold() {
    return static_cast<LogLevel>(threshold_storage().load(std::memory_order_relaxed));
}

void set_log_threshold(LogLevel level) {
    threshold_storage().store(static_cast<int>(level), std::memory_order_relaxed);
}

void log_message(LogLevel level, const std::string & msg) {
    static const char * names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[sra:%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

} // namespace sra
