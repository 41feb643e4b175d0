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
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "beeptrace/bytes.hpp"

namespace beeptrace {

// Total serialized address width.
enum class Width : std::uint8_t { kW32 = 32, kW64 = 64 };

constexpr std::size_t total_bytes(Width w) { return static_cast<std::size_t>(w); }
constexpr std::size_t half_bytes(Width w) { return total_bytes(w) / 2; }

// Throws Error(kBadLength) unless n is 32 or 64.
Width width_from_bytes(std::size_t n);

// A ledger address: pseudonym prefix followed by a commitment to the geodata
// ciphertext. Both halves are always width/2 bytes.
class TraceCode {
 public:
  TraceCode() = default;

  Width width() const { return width_; }
  ByteView prefix() const { return ByteView(raw_).first(half_bytes(width_)); }
  ByteView suffix() const { return ByteView(raw_).subspan(half_bytes(width_)); }

  // prefix || suffix
  const Bytes& serialized() const { return raw_; }
  std::string hex() const { return to_hex(raw_); }

  friend bool operator==(const TraceCode&, const TraceCode&) = default;

 private:
  friend TraceCode encode_tracecode(ByteView, ByteView, Width);
  friend TraceCode decode_tracecode(ByteView);

  TraceCode(Bytes raw, Width width) : raw_(std::move(raw)), width_(width) {}

  Bytes raw_ = Bytes(64, 0);
  Width width_ = Width::kW64;
};

// Throws Error(kLengthMismatch) when either part is not width/2 bytes.
TraceCode encode_tracecode(ByteView prefix, ByteView suffix, Width width);

// Splits at the midpoint. Throws Error(kBadLength) unless raw is 32 or 64 bytes.
TraceCode decode_tracecode(ByteView raw);

inline constexpr std::size_t kFingerprintBytes = 16;

struct Fingerprint {
  std::array<std::uint8_t, kFingerprintBytes> digest{};

  std::string hex() const { return to_hex(digest); }
  static Fingerprint from_hex(std::string_view hex);

  friend auto operator<=>(const Fingerprint&, const Fingerprint&) = default;
};

// 16-byte BLAKE2b digest of the prefix. Throws Error(kEmptyInput) on an empty
// prefix.
Fingerprint fingerprint(ByteView prefix);

}  // namespace beeptrace

template <>
struct std::hash<beeptrace::Fingerprint> {
  std::size_t operator()(const beeptrace::Fingerprint& f) const noexcept {
    std::size_t h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | f.digest[i];
    return h;
  }
};
