// Copyright 2026 The BeepTrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace beeptrace {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::string to_hex(ByteView bytes);

// Throws Error(kInvalidArgument) on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

template <std::size_t N>
ByteView view(const std::array<std::uint8_t, N>& a) {
  return {a.data(), a.size()};
}

// Little-endian append helpers used by the wire formats.
void put_u8(Bytes& out, std::uint8_t v);
void put_u32(Bytes& out, std::uint32_t v);
void put_u64(Bytes& out, std::uint64_t v);
void put_i64(Bytes& out, std::int64_t v);
void put_f64(Bytes& out, double v);
void put_bytes(Bytes& out, ByteView v);

// Bounds-checked little-endian reader; throws Error(kCorruptCiphertext) on
// truncation since every decoder in the library reads ciphertext payloads.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  ByteView take(std::size_t n);

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

// True if `needle` occurs anywhere inside `haystack`.
bool contains(ByteView haystack, ByteView needle);

}  // namespace beeptrace
