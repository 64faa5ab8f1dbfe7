// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include "graft/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return graft::cli::run(args);
}
