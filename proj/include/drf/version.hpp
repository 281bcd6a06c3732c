#pragma once

namespace drf {

#ifdef DRF_GIT_DESCRIBE
inline constexpr const char* kVersion = DRF_GIT_DESCRIBE;
#else
inline constexpr const char* kVersion = "0.1.0";
#endif

}  // namespace drf
