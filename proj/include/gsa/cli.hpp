#pragma once

namespace gsa {

// Entry point for the gsavatar command line tool.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int cli_main(int argc, const char* const* argv);

}  // namespace gsa
