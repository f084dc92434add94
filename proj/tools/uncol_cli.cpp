// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return uncol::run_cli(argc, argv, std::cout, std::cerr); }
