#pragma once

namespace sigadv {

/// Full command-line entry point. Returns the process exit code:
/// 0 success, 2 usage/config error, 1 runtime failure.
int cli_main(int argc, const char* const* argv);

}  // namespace sigadv
