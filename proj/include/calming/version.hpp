#pragma once

namespace calming {
inline constexpr const char* kVersion = "0.1.0";
}
