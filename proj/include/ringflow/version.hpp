#pragma once

namespace ringflow {

inline constexpr const char* kToolVersion = "ringflow 0.1.0";

}  // namespace ringflow
