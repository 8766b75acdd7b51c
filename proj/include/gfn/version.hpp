#pragma once

namespace gfn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gfn
