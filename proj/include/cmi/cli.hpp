#pragma once

#include <ostream>

namespace cmi {

inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Parses argv, runs one subcommand and writes its artifacts plus
/// run_manifest.json into --out-dir. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cmi
