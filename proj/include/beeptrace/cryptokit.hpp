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
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "beeptrace/bytes.hpp"
#include "beeptrace/geodata.hpp"
#include "beeptrace/rng.hpp"
#include "beeptrace/tracecode.hpp"

namespace beeptrace {

inline constexpr std::size_t kSeedBytes = 32;
inline constexpr std::size_t kChallengeBytes = 32;
inline constexpr std::size_t kSignatureBytes = 64;

using Seed = std::array<std::uint8_t, kSeedBytes>;
using PublicKey = std::array<std::uint8_t, 32>;

// Ed25519 keypair.
struct SigningKey {
  PublicKey public_key{};
  std::array<std::uint8_t, 64> secret_key{};

  static SigningKey from_seed(const Seed& seed);
  Bytes sign(ByteView message) const;
};

bool verify_signature(const PublicKey& pk, ByteView message, ByteView signature);

struct UserEpochKey {
  Seed user_seed{};
  std::int64_t epoch = 0;
  SigningKey signing_key;
};

// Deterministic per (seed, epoch). Throws Error(kInvalidArgument) for epoch < 0.
UserEpochKey derive_epoch_key(const Seed& user_seed, std::int64_t epoch);

// digest(epoch public key || counter) sized to the prefix of `width`.
Bytes derive_pseudonym(const UserEpochKey& key, std::uint64_t counter,
                       Width width = Width::kW64);

inline constexpr std::uint64_t kOwnershipScanWindow = 48;

struct OwnershipProof {
  Bytes challenge;
  Bytes signature;
  Bytes claimed_prefix;
  // The verifier recomputes the prefix from these.
  PublicKey epoch_public_key{};
  std::uint64_t counter = 0;
};

// Throws Error(kPrefixNotOwned) if no counter in [0, scan_window] derives the
// claimed prefix, and Error(kInvalidArgument) for a malformed challenge.
OwnershipProof prove_ownership(const UserEpochKey& key, ByteView claimed_prefix,
                               ByteView challenge,
                               std::uint64_t scan_window = kOwnershipScanWindow);

bool verify_ownership(const OwnershipProof& proof);

// Also binds the proof to the challenge the verifier issued.
bool verify_ownership(const OwnershipProof& proof, ByteView expected_challenge);

using KeyId = std::uint32_t;

struct GeoPublicKey {
  KeyId key_id = 0;
  PublicKey public_part{};
};

// CA-certified X25519 keypair for geodata envelopes.
struct GeoEnvelopeKey {
  KeyId key_id = 0;
  PublicKey public_part{};
  std::array<std::uint8_t, 32> secret_part{};
  bool revoked = false;

  GeoPublicKey public_key() const { return {key_id, public_part}; }
  static GeoEnvelopeKey generate(KeyId id, const Seed& seed);
};

struct SealedGeodata {
  Bytes ciphertext;
  Bytes commitment;  // digest of ciphertext, suffix-sized
};

// Suffix-sized BLAKE2b digest of the ciphertext.
Bytes commitment_of(ByteView ciphertext, Width width);

// Randomized public-key encryption: fresh ephemeral key and nonce from `rng`.
SealedGeodata encrypt_geodata(const GeoPublicKey& pk, const GeoRecord& record,
                              Width width, Rng& rng);

// Reuses one ephemeral key for many records (one per user and epoch); each
// record still gets a fresh nonce so equal plaintexts encrypt differently.
class EnvelopeSession {
 public:
  EnvelopeSession(const GeoPublicKey& pk, const Seed& ephemeral_seed);

  SealedGeodata seal(const GeoRecord& record, Width width, Rng& rng) const;
  KeyId key_id() const { return key_id_; }

 private:
  KeyId key_id_;
  PublicKey ephemeral_public_{};
  std::array<std::uint8_t, 32> shared_key_{};
};

// Throws Error(kKeyRevoked) for a revoked key, Error(kUnknownKey) if the
// ciphertext names another key, Error(kCorruptCiphertext) on any decoding or
// authentication failure.
GeoRecord decrypt_geodata(const GeoEnvelopeKey& key, ByteView ciphertext);

// Key id embedded in a geodata ciphertext.
KeyId ciphertext_key_id(ByteView ciphertext);

// The CA's geodata key store. All members are safe to call concurrently;
// operations on one key id are linearizable.
class KeyRegistry {
 public:
  // Throws Error(kInvalidArgument) if the id is already registered.
  void add(GeoEnvelopeKey key);

  // Throws Error(kUnknownKey).
  void revoke(KeyId id);
  bool is_revoked(KeyId id) const;
  bool contains(KeyId id) const;
  GeoPublicKey public_key(KeyId id) const;
  std::vector<KeyId> ids() const;

  // Decrypts with the key named in the ciphertext. Caches X25519 shared keys
  // per ephemeral public key.
  GeoRecord decrypt(ByteView ciphertext) const;

  // JSON list of {key_id, public_part (hex), revoked}.
  std::string snapshot_json() const;

 private:
  mutable std::mutex mu_;
  std::map<KeyId, GeoEnvelopeKey> keys_;
  mutable std::map<std::pair<KeyId, PublicKey>, std::array<std::uint8_t, 32>> shared_cache_;
};

struct RegistryEntry {
  KeyId key_id = 0;
  PublicKey public_part{};
  bool revoked = false;
};

std::vector<RegistryEntry> parse_registry_snapshot(std::string_view json);

}  // namespace beeptrace
