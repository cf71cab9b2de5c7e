#pragma once

namespace chaosrc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace chaosrc
