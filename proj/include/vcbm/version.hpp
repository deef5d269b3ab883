#pragma once

namespace vcbm {

inline constexpr const char* kToolName = "vcbm";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kClipFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;

}  // namespace vcbm
