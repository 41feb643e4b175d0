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

#include "beeptrace/bytes.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <functional>

#include "beeptrace/error.hpp"

namespace beeptrace {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kBadLength: return "BadLength";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kPrefixNotOwned: return "PrefixNotOwned";
    case ErrorCode::kKeyRevoked: return "KeyRevoked";
    case ErrorCode::kCorruptCiphertext: return "CorruptCiphertext";
    case ErrorCode::kUnknownKey: return "UnknownKey";
    case ErrorCode::kUnknownParent: return "UnknownParent";
    case ErrorCode::kStaleTimestamp: return "StaleTimestamp";
    case ErrorCode::kDuplicateEntry: return "DuplicateEntry";
    case ErrorCode::kBadSignature: return "BadSignature";
    case ErrorCode::kInvalidCoordinate: return "InvalidCoordinate";
    case ErrorCode::kUnsortedTrace: return "UnsortedTrace";
    case ErrorCode::kBadPolicy: return "BadPolicy";
    case ErrorCode::kOwnershipFailed: return "OwnershipFailed";
    case ErrorCode::kNoConsent: return "NoConsent";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

std::string to_hex(ByteView bytes) {
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) {
    throw Error(ErrorCode::kInvalidArgument, "odd-length hex string");
  }
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw Error(ErrorCode::kInvalidArgument, "non-hex character");
    }
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_i64(Bytes& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

void put_f64(Bytes& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_bytes(Bytes& out, ByteView v) { out.insert(out.end(), v.begin(), v.end()); }

ByteView ByteReader::take(std::size_t n) {
  if (remaining() < n) {
    throw Error(ErrorCode::kCorruptCiphertext, "truncated payload");
  }
  ByteView v = data_.subspan(pos_, n);
  pos_ += n;
  return v;
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }

std::uint32_t ByteReader::u32() {
  ByteView v = take(4);
  std::uint32_t r = 0;
  for (int i = 3; i >= 0; --i) r = (r << 8) | v[i];
  return r;
}

std::uint64_t ByteReader::u64() {
  ByteView v = take(8);
  std::uint64_t r = 0;
  for (int i = 7; i >= 0; --i) r = (r << 8) | v[i];
  return r;
}

std::int64_t ByteReader::i64() { return static_cast<std::int64_t>(u64()); }

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

bool contains(ByteView haystack, ByteView needle) {
  if (needle.empty()) return true;
  auto it = std::search(haystack.begin(), haystack.end(),
                        std::boyer_moore_searcher(needle.begin(), needle.end()));
  return it != haystack.end();
}

}  // namespace beeptrace
