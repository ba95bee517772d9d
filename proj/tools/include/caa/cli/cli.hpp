#pragma once

#include <ostream>

namespace caa::cli {

// Exit codes: 0 success, 1 usage error, 2 runtime error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace caa::cli
