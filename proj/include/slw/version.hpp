#pragma once

namespace slw {

inline constexpr const char* kVersionString = "slwlab 0.1.0";

}  // namespace slw
