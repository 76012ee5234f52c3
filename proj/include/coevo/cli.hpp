#pragma once

#include <CLI11.hpp>

#include "coevo/types.hpp"

namespace coevo::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
int run(int argc, const char* const* argv);

// Registers the loop hyperparameter flags on a command, bound to cfg and
// defaulted from it. The CLI surfaces exactly LoopConfig's defaults; a test
// diffs the two.
void add_loop_options(CLI::App& app, LoopConfig& cfg);

}  // namespace coevo::cli
