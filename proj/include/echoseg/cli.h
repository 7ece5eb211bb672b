#pragma once

#include <ostream>

namespace echoseg {

// Exit codes: 0 success, 1 usage/other failure, 2 validation error, 3 I/O error,
// 4 non-finite loss during training.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace echoseg
