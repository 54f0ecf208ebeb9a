#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "corpgnn/error.hpp"
#include "corpgnn/gradient_suite.hpp"

namespace corpgnn::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumerical = 3,
};

/// Runs the `corpgnn` command line. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int exit_code_for(ErrorCategory category);

/// 0 when every check passed, numerical failure otherwise (including any
/// non-finite gradient or loss).
int gradcheck_exit_code(const GradientSuiteReport& report);

}  // namespace corpgnn::cli
