// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return rmmb::cli::run_main(argc, argv, std::cout, std::cerr); }
