#pragma once

namespace hoda {

inline constexpr const char* kToolName = "hoda";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace hoda
