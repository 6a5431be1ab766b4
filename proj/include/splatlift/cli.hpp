// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace splatlift {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitValidation = 1,
    kExitIo = 2,
    kExitNumeric = 3,
};

/// Runs the `splatlift` command line. Subcommands: uplift, render, diffuse,
/// segment, localize, relevancy, bench, gen-synthetic, serve.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace splatlift
