// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

int main(int argc, char ** argv) {
    return sra::cli::main_entry(argc, argv);
}
