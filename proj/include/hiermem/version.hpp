// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

namespace hiermem {

inline constexpr std::string_view kToolVersion = "1.0.0";

}  // namespace hiermem
