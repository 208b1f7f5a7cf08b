// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fmt/core.h>

#include <string>
#include <utility>

namespace sra {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

// Threshold is read once from the SRA_LOG environment variable
// (error|warn|info|debug); default is warn.
LogLevel log_threshold();
void set_log_threshold(LogLevel level);

void log_message(LogLevel level, const std::string & msg);

template <typename... Args>
void log_warn(fmt::format_string<Args...> f, Args &&... args) {
    if (log_threshold() >= LogLevel::warn) {
        log_message(LogLevel::warn, fmt::format(f, std::forward<Args>(args)...));
    }
}

template <typename... Args>
void log_info(fmt::format_string<Args...> f, Args &&... args) {
    if (log_threshold() >= LogLevel::info) {
        log_message(LogLevel::info, fmt::format(f, std::forward<Args>(args)...));
    }
}

template <typename... Args>
void log_debug(fmt::format_string<Args...> f, Args &&... args) {
    if (log_threshold() >= LogLevel::debug) {
        log_message(LogLevel::debug, fmt::format(f, std::forward<Args>(args)...));
    }
}

} // namespace sra
