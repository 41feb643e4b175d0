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

#include "beeptrace/cryptokit.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>

#include "beeptrace/error.hpp"
#include "json.hpp"
#include "sodium_init.hpp"

namespace beeptrace {

namespace {

constexpr std::uint8_t kEnvelopeVersion = 1;
constexpr std::size_t kNonceBytes = crypto_box_NONCEBYTES;
constexpr std::size_t kHeaderBytes = 1 + 4 + 32 + kNonceBytes;

constexpr std::string_view kEpochDomain = "beeptrace/epoch-key";
constexpr std::string_view kPseudonymDomain = "beeptrace/pseudonym";
constexpr std::string_view kOwnershipDomain = "beeptrace/ownership";

Bytes ownership_message(ByteView challenge, ByteView prefix) {
  Bytes msg;
  put_bytes(msg, as_bytes(kOwnershipDomain));
  put_bytes(msg, challenge);
  put_bytes(msg, prefix);
  return msg;
}

Bytes pseudonym_from_public(const PublicKey& pk, std::uint64_t counter, std::size_t len) {
  Bytes input;
  put_bytes(input, as_bytes(kPseudonymDomain));
  put_bytes(input, pk);
  put_u64(input, counter);
  Bytes out(len);
  crypto_generichash(out.data(), out.size(), input.data(), input.size(), nullptr, 0);
  return out;
}

struct ParsedEnvelope {
  KeyId key_id;
  PublicKey ephemeral{};
  ByteView nonce;
  ByteView boxed;
};

ParsedEnvelope parse_envelope(ByteView ciphertext) {
  if (ciphertext.size() < kHeaderBytes + crypto_box_MACBYTES) {
    throw Error(ErrorCode::kCorruptCiphertext, "envelope too short");
  }
  ByteReader in(ciphertext);
  if (in.u8() != kEnvelopeVersion) {
    throw Error(ErrorCode::kCorruptCiphertext, "unknown envelope version");
  }
  ParsedEnvelope env;
  env.key_id = in.u32();
  ByteView epk = in.take(32);
  std::copy(epk.begin(), epk.end(), env.ephemeral.begin());
  env.nonce = in.take(kNonceBytes);
  env.boxed = in.take(in.remaining());
  return env;
}

Bytes envelope_header(KeyId key_id, const PublicKey& epk,
                      const std::array<std::uint8_t, kNonceBytes>& nonce) {
  Bytes out;
  put_u8(out, kEnvelopeVersion);
  put_u32(out, key_id);
  put_bytes(out, epk);
  put_bytes(out, nonce);
  return out;
}

GeoRecord open_with_shared(const std::array<std::uint8_t, 32>& shared,
                           const ParsedEnvelope& env) {
  Bytes plain(env.boxed.size() - crypto_box_MACBYTES);
  if (crypto_box_open_easy_afternm(plain.data(), env.boxed.data(), env.boxed.size(),
                                   env.nonce.data(), shared.data()) != 0) {
    throw Error(ErrorCode::kCorruptCiphertext, "envelope authentication failed");
  }
  return parse_record(plain);
}

}  // namespace

SigningKey SigningKey::from_seed(const Seed& seed) {
  detail::ensure_sodium();
  SigningKey k;
  crypto_sign_seed_keypair(k.public_key.data(), k.secret_key.data(), seed.data());
  return k;
}

Bytes SigningKey::sign(ByteView message) const {
  Bytes sig(crypto_sign_BYTES);
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(),
                       secret_key.data());
  return sig;
}

bool verify_signature(const PublicKey& pk, ByteView message, ByteView signature) {
  detail::ensure_sodium();
  if (signature.size() != crypto_sign_BYTES) return false;
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                     pk.data()) == 0;
}

UserEpochKey derive_epoch_key(const Seed& user_seed, std::int64_t epoch) {
  if (epoch < 0) {
    throw Error(ErrorCode::kInvalidArgument, "epoch must be non-negative");
  }
  detail::ensure_sodium();
  Bytes msg;
  put_bytes(msg, as_bytes(kEpochDomain));
  put_i64(msg, epoch);
  Seed signing_seed{};
  crypto_generichash(signing_seed.data(), signing_seed.size(), msg.data(), msg.size(),
                     user_seed.data(), user_seed.size());
  UserEpochKey key;
  key.user_seed = user_seed;
  key.epoch = epoch;
  key.signing_key = SigningKey::from_seed(signing_seed);
  sodium_memzero(signing_seed.data(), signing_seed.size());
  return key;
}

Bytes derive_pseudonym(const UserEpochKey& key, std::uint64_t counter, Width width) {
  detail::ensure_sodium();
  return pseudonym_from_public(key.signing_key.public_key, counter, half_bytes(width));
}

OwnershipProof prove_ownership(const UserEpochKey& key, ByteView claimed_prefix,
                               ByteView challenge, std::uint64_t scan_window) {
  if (challenge.size() != kChallengeBytes) {
    throw Error(ErrorCode::kInvalidArgument, "challenge must be 32 bytes");
  }
  detail::ensure_sodium();
  const std::size_t len = claimed_prefix.size();
  if (len == half_bytes(Width::kW64) || len == half_bytes(Width::kW32)) {
    for (std::uint64_t counter = 0; counter <= scan_window; ++counter) {
      Bytes candidate = pseudonym_from_public(key.signing_key.public_key, counter, len);
      if (std::equal(candidate.begin(), candidate.end(), claimed_prefix.begin())) {
        OwnershipProof proof;
        proof.challenge.assign(challenge.begin(), challenge.end());
        proof.claimed_prefix.assign(claimed_prefix.begin(), claimed_prefix.end());
        proof.signature = key.signing_key.sign(ownership_message(challenge, claimed_prefix));
        proof.epoch_public_key = key.signing_key.public_key;
        proof.counter = counter;
        return proof;
      }
    }
  }
  throw Error(ErrorCode::kPrefixNotOwned,
              "claimed prefix is not derived from this epoch key");
}

bool verify_ownership(const OwnershipProof& proof) {
  detail::ensure_sodium();
  const std::size_t len = proof.claimed_prefix.size();
  if (len != half_bytes(Width::kW64) && len != half_bytes(Width::kW32)) return false;
  if (proof.challenge.size() != kChallengeBytes) return false;
  Bytes expected = pseudonym_from_public(proof.epoch_public_key, proof.counter, len);
  if (expected != proof.claimed_prefix) return false;
  return verify_signature(proof.epoch_public_key,
                          ownership_message(proof.challenge, proof.claimed_prefix),
                          proof.signature);
}

bool verify_ownership(const OwnershipProof& proof, ByteView expected_challenge) {
  if (!std::equal(proof.challenge.begin(), proof.challenge.end(),
                  expected_challenge.begin(), expected_challenge.end())) {
    return false;
  }
  return verify_ownership(proof);
}

GeoEnvelopeKey GeoEnvelopeKey::generate(KeyId id, const Seed& seed) {
  detail::ensure_sodium();
  GeoEnvelopeKey k;
  k.key_id = id;
  crypto_box_seed_keypair(k.public_part.data(), k.secret_part.data(), seed.data());
  return k;
}

Bytes commitment_of(ByteView ciphertext, Width width) {
  detail::ensure_sodium();
  Bytes out(half_bytes(width));
  crypto_generichash(out.data(), out.size(), ciphertext.data(), ciphertext.size(), nullptr,
                     0);
  return out;
}

EnvelopeSession::EnvelopeSession(const GeoPublicKey& pk, const Seed& ephemeral_seed)
    : key_id_(pk.key_id) {
  detail::ensure_sodium();
  std::array<std::uint8_t, 32> ephemeral_secret{};
  crypto_box_seed_keypair(ephemeral_public_.data(), ephemeral_secret.data(),
                          ephemeral_seed.data());
  if (crypto_box_beforenm(shared_key_.data(), pk.public_part.data(),
                          ephemeral_secret.data()) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "degenerate geodata public key");
  }
  sodium_memzero(ephemeral_secret.data(), ephemeral_secret.size());
}

SealedGeodata EnvelopeSession::seal(const GeoRecord& record, Width width, Rng& rng) const {
  validate(record);
  auto nonce = rng.bytes<kNonceBytes>();
  Bytes plain = serialize_record(record);
  SealedGeodata out;
  out.ciphertext = envelope_header(key_id_, ephemeral_public_, nonce);
  const std::size_t header = out.ciphertext.size();
  out.ciphertext.resize(header + crypto_box_MACBYTES + plain.size());
  crypto_box_easy_afternm(out.ciphertext.data() + header, plain.data(), plain.size(),
                          nonce.data(), shared_key_.data());
  out.commitment = commitment_of(out.ciphertext, width);
  return out;
}

SealedGeodata encrypt_geodata(const GeoPublicKey& pk, const GeoRecord& record, Width width,
                              Rng& rng) {
  auto ephemeral_seed = rng.bytes<kSeedBytes>();
  EnvelopeSession session(pk, ephemeral_seed);
  return session.seal(record, width, rng);
}

KeyId ciphertext_key_id(ByteView ciphertext) { return parse_envelope(ciphertext).key_id; }

GeoRecord decrypt_geodata(const GeoEnvelopeKey& key, ByteView ciphertext) {
  detail::ensure_sodium();
  if (key.revoked) {
    throw Error(ErrorCode::kKeyRevoked, "geodata key " + std::to_string(key.key_id));
  }
  ParsedEnvelope env = parse_envelope(ciphertext);
  if (env.key_id != key.key_id) {
    throw Error(ErrorCode::kUnknownKey, "ciphertext was sealed for key " +
                                            std::to_string(env.key_id));
  }
  std::array<std::uint8_t, 32> shared{};
  if (crypto_box_beforenm(shared.data(), env.ephemeral.data(), key.secret_part.data()) != 0) {
    throw Error(ErrorCode::kCorruptCiphertext, "degenerate ephemeral key");
  }
  return open_with_shared(shared, env);
}

void KeyRegistry::add(GeoEnvelopeKey key) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = keys_.emplace(key.key_id, key);
  if (!inserted) {
    throw Error(ErrorCode::kInvalidArgument,
                "duplicate key id " + std::to_string(key.key_id));
  }
}

void KeyRegistry::revoke(KeyId id) {
  std::lock_guard lock(mu_);
  auto it = keys_.find(id);
  if (it == keys_.end()) {
    throw Error(ErrorCode::kUnknownKey, "key id " + std::to_string(id));
  }
  it->second.revoked = true;
  std::erase_if(shared_cache_, [id](const auto& kv) { return kv.first.first == id; });
}

bool KeyRegistry::is_revoked(KeyId id) const {
  std::lock_guard lock(mu_);
  auto it = keys_.find(id);
  if (it == keys_.end()) {
    throw Error(ErrorCode::kUnknownKey, "key id " + std::to_string(id));
  }
  return it->second.revoked;
}

bool KeyRegistry::contains(KeyId id) const {
  std::lock_guard lock(mu_);
  return keys_.contains(id);
}

GeoPublicKey KeyRegistry::public_key(KeyId id) const {
  std::lock_guard lock(mu_);
  auto it = keys_.find(id);
  if (it == keys_.end()) {
    throw Error(ErrorCode::kUnknownKey, "key id " + std::to_string(id));
  }
  return it->second.public_key();
}

std::vector<KeyId> KeyRegistry::ids() const {
  std::lock_guard lock(mu_);
  std::vector<KeyId> out;
  for (const auto& [id, key] : keys_) out.push_back(id);
  return out;
}

GeoRecord KeyRegistry::decrypt(ByteView ciphertext) const {
  detail::ensure_sodium();
  ParsedEnvelope env = parse_envelope(ciphertext);
  std::array<std::uint8_t, 32> shared{};
  {
    std::lock_guard lock(mu_);
    auto it = keys_.find(env.key_id);
    if (it == keys_.end()) {
      throw Error(ErrorCode::kUnknownKey, "key id " + std::to_string(env.key_id));
    }
    if (it->second.revoked) {
      throw Error(ErrorCode::kKeyRevoked, "geodata key " + std::to_string(env.key_id));
    }
    auto cache_key = std::make_pair(env.key_id, env.ephemeral);
    auto cached = shared_cache_.find(cache_key);
    if (cached != shared_cache_.end()) {
      shared = cached->second;
    } else {
      if (crypto_box_beforenm(shared.data(), env.ephemeral.data(),
                              it->second.secret_part.data()) != 0) {
        throw Error(ErrorCode::kCorruptCiphertext, "degenerate ephemeral key");
      }
      shared_cache_.emplace(cache_key, shared);
    }
  }
  return open_with_shared(shared, env);
}

std::string KeyRegistry::snapshot_json() const {
  std::lock_guard lock(mu_);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [id, key] : keys_) {
    list.push_back({{"key_id", id}, {"public_part", to_hex(key.public_part)},
                    {"revoked", key.revoked}});
  }
  return list.dump();
}

std::vector<RegistryEntry> parse_registry_snapshot(std::string_view json) {
  std::vector<RegistryEntry> out;
  try {
    auto list = nlohmann::json::parse(json);
    if (!list.is_array()) throw Error(ErrorCode::kConfigError, "expected a JSON list");
    for (const auto& item : list) {
      RegistryEntry e;
      e.key_id = item.at("key_id").get<KeyId>();
      Bytes pk = from_hex(item.at("public_part").get<std::string>());
      if (pk.size() != 32) throw Error(ErrorCode::kConfigError, "public_part must be 32 bytes");
      std::copy(pk.begin(), pk.end(), e.public_part.begin());
      e.revoked = item.at("revoked").get<bool>();
      out.push_back(e);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kConfigError, ex.what());
  }
  return out;
}

}  // namespace beeptrace
