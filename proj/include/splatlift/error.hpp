// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace splatlift {

/// Invalid arguments or inputs violating a documented precondition.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failures (unreadable/unwritable paths).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents. Treated as an I/O failure by the CLI.
class FormatError : public IoError {
public:
    using IoError::IoError;
};

/// Non-finite or otherwise unusable intermediate values.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace splatlift
