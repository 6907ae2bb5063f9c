#pragma once

namespace fedkbp {

inline constexpr const char* kVersionString = "fedkbp 0.1.0";

}  // namespace fedkbp
