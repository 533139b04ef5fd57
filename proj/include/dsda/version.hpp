#pragma once

namespace dsda {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dsda
