// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace uncol {

// Exit codes: 0 success, 1 validation or I/O error, 2 numerical failure.
// A single-line JSON summary goes to out; diagnostics go to err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace uncol
