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

#include <set>
#include <sodium.h>

#include "beeptrace/bytes.hpp"
#include "beeptrace/error.hpp"
#include "beeptrace/rng.hpp"
#include "beeptrace/tracecode.hpp"
#include "doctest.h"

using namespace beeptrace;

namespace {

Bytes random_bytes(Rng& rng, std::size_t n) {
  Bytes b(n);
  rng.fill(b);
  return b;
}

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIoError;
}

}  // namespace

TEST_CASE("hex round trip and rejects junk") {
  Bytes b{0x00, 0x01, 0xab, 0xff};
  CHECK(to_hex(b) == "0001abff");
  CHECK(from_hex("0001ABff") == b);
  CHECK(code_of([] { from_hex("abc"); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { from_hex("zz"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("little-endian writers and reader agree") {
  Bytes out;
  put_u8(out, 7);
  put_u32(out, 0xdeadbeef);
  put_u64(out, 0x0102030405060708ULL);
  put_i64(out, -42);
  put_f64(out, 55.8721);
  CHECK(out.size() == 1 + 4 + 8 + 8 + 8);
  CHECK(out[1] == 0xef);
  ByteReader r(out);
  CHECK(r.u8() == 7);
  CHECK(r.u32() == 0xdeadbeef);
  CHECK(r.u64() == 0x0102030405060708ULL);
  CHECK(r.i64() == -42);
  CHECK(r.f64() == 55.8721);
  CHECK(r.remaining() == 0);
  CHECK(code_of([&] { r.u8(); }) == ErrorCode::kCorruptCiphertext);
}

TEST_CASE("encode zero components gives zero address") {
  TraceCode t = encode_tracecode(Bytes(32, 0), Bytes(32, 0), Width::kW64);
  CHECK(t.serialized() == Bytes(64, 0));
  CHECK(t.width() == Width::kW64);
}

TEST_CASE("encode concatenates prefix then suffix") {
  TraceCode t = encode_tracecode(Bytes(32, 0x01), Bytes(32, 0x02), Width::kW64);
  const Bytes& s = t.serialized();
  CHECK(s.size() == 64);
  CHECK(s[0] == 0x01);
  CHECK(s[32] == 0x02);
}

TEST_CASE("encode rejects mismatched lengths") {
  CHECK(code_of([] { encode_tracecode(Bytes(16, 0), Bytes(32, 0), Width::kW64); }) ==
        ErrorCode::kLengthMismatch);
  CHECK(code_of([] { encode_tracecode(Bytes(32, 0), Bytes(32, 0), Width::kW32); }) ==
        ErrorCode::kLengthMismatch);
  CHECK(code_of([] { encode_tracecode(Bytes(16, 0), Bytes(15, 0), Width::kW32); }) ==
        ErrorCode::kLengthMismatch);
}

TEST_CASE("decode splits at the midpoint") {
  TraceCode t = decode_tracecode(Bytes(64, 0));
  CHECK(Bytes(t.prefix().begin(), t.prefix().end()) == Bytes(32, 0));
  CHECK(Bytes(t.suffix().begin(), t.suffix().end()) == Bytes(32, 0));

  Bytes raw(32);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint8_t>(i);
  TraceCode w = decode_tracecode(raw);
  CHECK(w.width() == Width::kW32);
  CHECK(w.prefix().size() == 16);
  CHECK(w.suffix()[0] == 16);
}

TEST_CASE("decode rejects other lengths") {
  for (std::size_t n : {0, 1, 31, 33, 63, 65, 128}) {
    CHECK(code_of([&] { decode_tracecode(Bytes(n, 0)); }) == ErrorCode::kBadLength);
  }
}

TEST_CASE("round trip over random components") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    Width w = (i % 2) ? Width::kW64 : Width::kW32;
    Bytes p = random_bytes(rng, half_bytes(w)), s = random_bytes(rng, half_bytes(w));
    TraceCode t = decode_tracecode(encode_tracecode(p, s, w).serialized());
    CHECK(Bytes(t.prefix().begin(), t.prefix().end()) == p);
    CHECK(Bytes(t.suffix().begin(), t.suffix().end()) == s);
    CHECK(t.serialized().size() == total_bytes(w));
    CHECK(encode_tracecode(t.prefix(), t.suffix(), w).serialized() == t.serialized());
  }
}

TEST_CASE("fingerprint is a fixed-size deterministic digest") {
  Rng rng(3);
  for (std::size_t n : {16, 32}) {
    Bytes p = random_bytes(rng, n);
    Fingerprint a = fingerprint(p), b = fingerprint(p);
    CHECK(a == b);
    CHECK(a.digest.size() == 16);
    CHECK(a.hex().size() == 32);
    CHECK(Fingerprint::from_hex(a.hex()) == a);
    // Independent recomputation with the underlying primitive.
    std::array<std::uint8_t, 16> expect{};
    REQUIRE(sodium_init() >= 0);
    crypto_generichash(expect.data(), expect.size(), p.data(), p.size(), nullptr, 0);
    CHECK(a.digest == expect);
  }
  CHECK(code_of([] { fingerprint(Bytes{}); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("no fingerprint collisions over 10^4 distinct prefixes") {
  Rng rng(5);
  std::set<Bytes> prefixes;
  std::set<Fingerprint> digests;
  while (prefixes.size() < 10000) prefixes.insert(random_bytes(rng, 32));
  for (const Bytes& p : prefixes) digests.insert(fingerprint(p));
  CHECK(digests.size() == prefixes.size());
}

TEST_CASE("width helpers") {
  CHECK(total_bytes(Width::kW64) == 64);
  CHECK(half_bytes(Width::kW32) == 16);
  CHECK(width_from_bytes(32) == Width::kW32);
  CHECK(code_of([] { width_from_bytes(48); }) == ErrorCode::kBadLength);
}

TEST_CASE("rng streams are reproducible and forks differ") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng f1 = Rng(1).fork(1), f2 = Rng(1).fork(2);
  CHECK(f1.next_u64() != f2.next_u64());
  Rng c(7);
  for (int i = 0; i < 1000; ++i) {
    double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(c.below(10) < 10);
  }
}

TEST_CASE("byte search finds embedded needles") {
  Bytes hay{1, 2, 3, 4, 5, 6};
  CHECK(contains(hay, Bytes{3, 4}));
  CHECK_FALSE(contains(hay, Bytes{4, 3}));
  CHECK(contains(hay, Bytes{}));
}
