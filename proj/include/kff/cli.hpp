#pragma once

#include <iosfwd>

namespace kff {

// Entry point behind the `kff` executable. Exit codes: 0 success/pass,
// 1 runtime failure or failed check, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kff
