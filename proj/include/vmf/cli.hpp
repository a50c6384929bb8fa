#pragma once

namespace vmf {

/// Full command-line entry point. Exit codes: 0 success, 1 input error,
/// 2 numerical failure (NaN/Inf), 3 gradient-audit failure.
int run_cli(int argc, const char* const* argv);

}  // namespace vmf
