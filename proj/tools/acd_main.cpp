// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "acd/evalcli.hpp"

int main(int argc, char** argv) { return acd::run_cli(argc, argv, std::cout, std::cerr); }
