#pragma once

namespace pnr {

inline constexpr const char* kToolName = "pnrsim";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace pnr
