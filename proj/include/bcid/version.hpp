#pragma once

namespace bcid {

inline constexpr const char* kVersion = "0.1.0";

} // namespace bcid
