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

#include "beeptrace/tracecode.hpp"

#include <sodium.h>

#include <algorithm>

#include "beeptrace/error.hpp"
#include "sodium_init.hpp"

namespace beeptrace {

Width width_from_bytes(std::size_t n) {
  if (n == 32) return Width::kW32;
  if (n == 64) return Width::kW64;
  throw Error(ErrorCode::kBadLength,
              "address must be 32 or 64 bytes, got " + std::to_string(n));
}

TraceCode encode_tracecode(ByteView prefix, ByteView suffix, Width width) {
  const std::size_t half = half_bytes(width);
  if (prefix.size() != half || suffix.size() != half) {
    throw Error(ErrorCode::kLengthMismatch,
                "prefix/suffix must each be " + std::to_string(half) + " bytes");
  }
  Bytes raw;
  raw.reserve(total_bytes(width));
  put_bytes(raw, prefix);
  put_bytes(raw, suffix);
  return TraceCode(std::move(raw), width);
}

TraceCode decode_tracecode(ByteView raw) {
  Width w = width_from_bytes(raw.size());
  return TraceCode(Bytes(raw.begin(), raw.end()), w);
}

Fingerprint Fingerprint::from_hex(std::string_view hex) {
  Bytes b = beeptrace::from_hex(hex);
  if (b.size() != kFingerprintBytes) {
    throw Error(ErrorCode::kBadLength, "fingerprint must be 16 bytes");
  }
  Fingerprint f;
  std::copy(b.begin(), b.end(), f.digest.begin());
  return f;
}

Fingerprint fingerprint(ByteView prefix) {
  if (prefix.empty()) {
    throw Error(ErrorCode::kEmptyInput, "cannot fingerprint an empty prefix");
  }
  detail::ensure_sodium();
  Fingerprint f;
  crypto_generichash(f.digest.data(), f.digest.size(), prefix.data(), prefix.size(),
                     nullptr, 0);
  return f;
}

}  // namespace beeptrace
