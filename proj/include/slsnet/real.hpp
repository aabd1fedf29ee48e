#pragma once

// Storage precision is fixed per build: the library is compiled once with
// double storage (gradient checks, default CLI) and once with float storage.
// Reductions always accumulate in double.
#ifndef SLSNET_REAL
#define SLSNET_REAL double
#endif

namespace slsnet {

using real = SLSNET_REAL;
using acc_t = double;

inline constexpr const char* precision_name() {
  return sizeof(real) == sizeof(float) ? "float" : "double";
}

}  // namespace slsnet
