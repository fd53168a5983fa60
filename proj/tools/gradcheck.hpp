#pragma once

#include <string>

namespace incepse::cli {

/// Finite-difference verification at one of three scales:
///   op    - every autodiff primitive and layer op, rel err < 1e-4
///   layer - a complete IncepSE layer (compact width), rel err < 1e-3
///   mini  - depth-2 model end to end, rel err < 1e-3
/// Prints one line per checked op with its worst relative error.
/// Returns true when everything passed.
bool run_gradcheck(const std::string& scale);

} // namespace incepse::cli
