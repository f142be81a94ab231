#pragma once

namespace ionsep {
inline constexpr const char* kVersion = "0.1.0";
}
