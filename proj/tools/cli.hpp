#pragma once

namespace incepse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2; // bad flags, malformed inputs
inline constexpr int kExitRuntime = 3;    // failures while running

/// Entry point shared by the binary and the in-process CLI tests.
int run(int argc, const char* const* argv);

} // namespace incepse::cli
