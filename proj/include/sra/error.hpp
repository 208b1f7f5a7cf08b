// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sra {

enum class ErrorCode {
    // numerical
    SingularSystem,
    NonFiniteInput,
    ZeroNorm,
    NotADistribution,
    SupportViolation,
    // validation
    DimensionMismatch,
    InvalidArgument,
    UnknownLayer,
    EmptyDump,
    CorruptHeader,
    ShapeMismatch,
    UnsupportedVersion,
    NoProtectedAtoms,
    InvalidRegistry,
    NotUnitVector,
    UnknownWeightId,
    InvalidConfig,
    TokenOutOfRange,
    SequenceTooLong,
    EmptyCorpus,
    SequenceTooShort,
    OutputExists,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// Numerical failures map to CLI exit code 3, everything else to 2.
bool is_numerical(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string & message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string & message);

} // namespace sra
