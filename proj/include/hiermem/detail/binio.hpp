// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hiermem/error.hpp"

// All on-disk formats are little-endian. The engine targets LE hosts only;
// refusing to compile elsewhere beats silently writing byte-swapped files.
static_assert(std::endian::native == std::endian::little,
              "hiermem binary formats require a little-endian host");

namespace hiermem::detail {

class ByteWriter {
 public:
  void put_bytes(const void* data, size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void put_u32(uint32_t v) { put_bytes(&v, sizeof v); }
  void put_u64(uint64_t v) { put_bytes(&v, sizeof v); }
  void put_f32(float v) { put_bytes(&v, sizeof v); }
  void put_str(std::string_view s) {
    put_u32(static_cast<uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }

  const std::vector<char>& bytes() const { return buf_; }
  size_t size() const { return buf_.size(); }
  std::vector<char> take() && { return std::move(buf_); }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const char* data, size_t n, std::string origin)
      : data_(data), size_(n), origin_(std::move(origin)) {}

  void get_bytes(void* out, size_t n) {
    if (pos_ + n > size_) {
      throw InputError(origin_ + ": truncated (need " + std::to_string(n) +
                       " bytes at offset " + std::to_string(pos_) + ")");
    }
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  uint32_t get_u32() {
    uint32_t v;
    get_bytes(&v, sizeof v);
    return v;
  }
  uint64_t get_u64() {
    uint64_t v;
    get_bytes(&v, sizeof v);
    return v;
  }
  std::string get_str() {
    uint32_t n = get_u32();
    if (pos_ + n > size_) {
      throw InputError(origin_ + ": truncated string at offset " +
                       std::to_string(pos_));
    }
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return size_ - pos_; }

 private:
  const char* data_;
  size_t size_;
  size_t pos_ = 0;
  std::string origin_;
};

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path);
  in.seekg(0, std::ios::end);
  auto n = static_cast<size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<char> buf(n);
  if (n > 0) in.read(buf.data(), static_cast<std::streamsize>(n));
  if (!in) throw InputError("read failed: " + path);
  return buf;
}

inline void write_file_bytes(const std::string& path, const void* data,
                             size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open file for writing: " + path);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  out.flush();
  if (!out) throw InputError("write failed: " + path);
}

}  // namespace hiermem::detail
