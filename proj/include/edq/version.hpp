#pragma once

namespace edq {

inline constexpr const char* kVersion = "0.1.0";

}
