// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Every subcommand writes a run manifest next to its
// output (<dir>/manifest.json or <file>.manifest.json) before doing any work
// and finalizes it with the status on exit.
//
// Exit codes: 0 success, 2 validation error, 3 numerical error.

#pragma once

#include <string>
#include <vector>

namespace sra::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

// args excludes the program name.
int run_cli(const std::vector<std::string> & args);

int main_entry(int argc, char ** argv);

} // namespace sra::cli
