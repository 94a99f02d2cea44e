#pragma once

namespace labelbias {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace labelbias
