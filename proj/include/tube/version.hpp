#pragma once

namespace tube {
inline constexpr const char* kVersion = "0.1.0";
}
