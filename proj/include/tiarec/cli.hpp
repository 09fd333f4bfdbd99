#pragma once

namespace tiarec {

// Entry point for the `tiarec` command line tool. Exit codes: 0 success,
// 2 configuration error, 3 data error, 4 numeric failure.
int run_cli(int argc, const char* const* argv);

}  // namespace tiarec
