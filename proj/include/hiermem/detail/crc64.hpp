// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace hiermem::detail {

// CRC-64/XZ (reflected, poly 0x42F0E1EBA9EA3693), table driven.
inline const std::array<uint64_t, 256>& crc64_table() {
  static const std::array<uint64_t, 256> table = [] {
    std::array<uint64_t, 256> t{};
    const uint64_t poly = 0xC96C5795D7870F42ull;  // reflected
    for (uint64_t i = 0; i < 256; ++i) {
      uint64_t crc = i;
      for (int j = 0; j < 8; ++j) {
        crc = (crc & 1) ? (crc >> 1) ^ poly : crc >> 1;
      }
      t[i] = crc;
    }
    return t;
  }();
  return table;
}

inline uint64_t crc64(const void* data, size_t n, uint64_t crc = 0) {
  const auto& t = crc64_table();
  const auto* p = static_cast<const unsigned char*>(data);
  crc = ~crc;
  for (size_t i = 0; i < n; ++i) {
    crc = t[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
  }
  return ~crc;
}

}  // namespace hiermem::detail
