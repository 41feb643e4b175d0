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

#include "beeptrace/ledger.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>

#include "beeptrace/error.hpp"
#include "json.hpp"

namespace beeptrace {

namespace {

std::string key_of(ByteView bytes) {
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void erase_id(std::unordered_map<std::string, std::vector<TxId>>& index,
              const std::string& key, TxId id) {
  auto it = index.find(key);
  if (it == index.end()) return;
  std::erase(it->second, id);
  if (it->second.empty()) index.erase(it);
}

}  // namespace

Bytes endorsement_message(const TraceCode& address, ByteView ciphertext,
                          std::int64_t timestamp) {
  Bytes msg;
  put_bytes(msg, as_bytes("beeptrace/endorse"));
  put_bytes(msg, address.serialized());
  put_u32(msg, static_cast<std::uint32_t>(ciphertext.size()));
  put_bytes(msg, ciphertext);
  put_i64(msg, timestamp);
  return msg;
}

Bytes serialize_tx(const TracingTx& tx) {
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(tx.address.width()));
  put_bytes(out, tx.address.serialized());
  put_u32(out, static_cast<std::uint32_t>(tx.ciphertext.size()));
  put_bytes(out, tx.ciphertext);
  std::uint8_t flags = (tx.endorsed() ? 1 : 0) | (tx.untrusted ? 2 : 0);
  put_u8(out, flags);
  if (tx.endorsement) {
    put_u32(out, static_cast<std::uint32_t>(tx.endorsement->diagnostician_id.size()));
    put_bytes(out, as_bytes(tx.endorsement->diagnostician_id));
    put_u32(out, static_cast<std::uint32_t>(tx.endorsement->signature.size()));
    put_bytes(out, tx.endorsement->signature);
  }
  put_i64(out, tx.timestamp);
  put_u8(out, static_cast<std::uint8_t>(tx.parents.size()));
  for (TxId p : tx.parents) put_u64(out, p);
  return out;
}

TracingLedger::TracingLedger(LedgerConfig config) : config_(config) {
  Node genesis;
  genesis.tx.timestamp = std::numeric_limits<std::int64_t>::min();
  nodes_.emplace(kGenesis, std::move(genesis));
  tips_.insert(kGenesis);
}

void TracingLedger::authorize_diagnostician(const std::string& id, const PublicKey& pk) {
  std::unique_lock lock(mu_);
  diagnosticians_[id] = pk;
}

bool TracingLedger::verify_endorsement(const TracingTx& tx) const {
  if (!tx.endorsement) return false;
  PublicKey pk;
  {
    std::shared_lock lock(mu_);
    auto it = diagnosticians_.find(tx.endorsement->diagnostician_id);
    if (it == diagnosticians_.end()) return false;
    pk = it->second;
  }
  return verify_signature(pk, endorsement_message(tx.address, tx.ciphertext, tx.timestamp),
                          tx.endorsement->signature);
}

TxId TracingLedger::append_tracing(TracingTx tx) {
  if (tx.parents.empty() || tx.parents.size() > 2 ||
      (tx.parents.size() == 2 && tx.parents[0] == tx.parents[1])) {
    throw Error(ErrorCode::kInvalidArgument, "a transaction needs 1 or 2 distinct parents");
  }
  if (tx.endorsement && !verify_endorsement(tx)) {
    throw Error(ErrorCode::kBadSignature, "endorsement does not verify");
  }
  std::unique_lock lock(mu_);
  std::int64_t newest_parent = std::numeric_limits<std::int64_t>::min();
  for (TxId p : tx.parents) {
    auto it = nodes_.find(p);
    if (it == nodes_.end()) {
      throw Error(ErrorCode::kUnknownParent, "parent " + std::to_string(p));
    }
    newest_parent = std::max(newest_parent, it->second.tx.timestamp);
  }
  if (newest_parent != std::numeric_limits<std::int64_t>::min() &&
      tx.timestamp < newest_parent - config_.clock_skew_s) {
    throw Error(ErrorCode::kStaleTimestamp,
                "timestamp " + std::to_string(tx.timestamp) + " precedes parent " +
                    std::to_string(newest_parent));
  }

  const TxId id = next_id_++;
  Node node;
  node.links = tx.parents;
  node.bytes = serialize_tx(tx).size();
  for (TxId p : tx.parents) {
    ++nodes_.at(p).children;
    tips_.erase(p);
  }
  tips_.insert(id);
  by_suffix_[key_of(tx.address.suffix())].push_back(id);
  by_prefix_[key_of(tx.address.prefix())].push_back(id);
  append_times_.insert(tx.timestamp);
  clock_ = std::max(clock_, tx.timestamp);
  bytes_stored_ += node.bytes;
  address_bytes_ += tx.address.serialized().size();
  node.tx = std::move(tx);
  nodes_.emplace(id, std::move(node));
  return id;
}

std::vector<TxId> TracingLedger::select_tips(Rng& rng) const {
  std::shared_lock lock(mu_);
  std::vector<TxId> tips(tips_.begin(), tips_.end());
  if (tips.size() <= 1) return tips;
  std::size_t i = rng.below(tips.size());
  std::size_t j = rng.below(tips.size() - 1);
  if (j >= i) ++j;
  return {tips[i], tips[j]};
}

std::vector<TxId> TracingLedger::tips() const {
  std::shared_lock lock(mu_);
  return {tips_.begin(), tips_.end()};
}

std::vector<TracingTx> TracingLedger::lookup_by_suffix(ByteView suffix) const {
  std::shared_lock lock(mu_);
  std::vector<TracingTx> out;
  auto it = by_suffix_.find(key_of(suffix));
  if (it == by_suffix_.end()) return out;
  for (TxId id : it->second) out.push_back(nodes_.at(id).tx);
  return out;
}

std::vector<std::pair<TxId, TracingTx>> TracingLedger::lookup_by_prefix(
    ByteView prefix) const {
  std::shared_lock lock(mu_);
  std::vector<std::pair<TxId, TracingTx>> out;
  auto it = by_prefix_.find(key_of(prefix));
  if (it == by_prefix_.end()) return out;
  for (TxId id : it->second) out.emplace_back(id, nodes_.at(id).tx);
  return out;
}

std::optional<TracingTx> TracingLedger::get(TxId id) const {
  std::shared_lock lock(mu_);
  auto it = nodes_.find(id);
  if (it == nodes_.end() || id == kGenesis) return std::nullopt;
  return it->second.tx;
}

std::vector<TxId> TracingLedger::links(TxId id) const {
  std::shared_lock lock(mu_);
  auto it = nodes_.find(id);
  if (it == nodes_.end()) return {};
  return it->second.links;
}

bool TracingLedger::is_live(TxId id) const {
  std::shared_lock lock(mu_);
  return nodes_.contains(id);
}

std::size_t TracingLedger::prune(std::int64_t horizon_s) {
  std::unique_lock lock(mu_);
  return prune_locked(clock_ - horizon_s);
}

std::size_t TracingLedger::prune(std::int64_t horizon_s, std::int64_t now) {
  std::unique_lock lock(mu_);
  return prune_locked(now - horizon_s);
}

std::size_t TracingLedger::prune_locked(std::int64_t cutoff) {
  std::vector<TxId> doomed;
  for (const auto& [id, node] : nodes_) {
    if (id != kGenesis && node.tx.timestamp < cutoff) doomed.push_back(id);
  }
  if (doomed.empty()) return 0;
  const std::set<TxId> doomed_set(doomed.begin(), doomed.end());

  for (TxId id : doomed) {
    Node& node = nodes_.at(id);
    for (TxId p : node.links) {
      if (doomed_set.contains(p)) continue;
      Node& parent = nodes_.at(p);
      if (--parent.children == 0) tips_.insert(p);
    }
    bytes_stored_ -= node.bytes;
    address_bytes_ -= node.tx.address.serialized().size();
    erase_id(by_suffix_, key_of(node.tx.address.suffix()), id);
    erase_id(by_prefix_, key_of(node.tx.address.prefix()), id);
    tips_.erase(id);
  }
  // Re-root surviving children of removed transactions at genesis.
  for (auto& [id, node] : nodes_) {
    if (doomed_set.contains(id)) continue;
    const bool had_genesis =
        std::find(node.links.begin(), node.links.end(), kGenesis) != node.links.end();
    bool touched = false;
    for (TxId& p : node.links) {
      if (doomed_set.contains(p)) {
        p = kGenesis;
        touched = true;
      }
    }
    if (!touched) continue;
    std::sort(node.links.begin(), node.links.end());
    node.links.erase(std::unique(node.links.begin(), node.links.end()), node.links.end());
    if (!had_genesis) {
      ++nodes_.at(kGenesis).children;
      tips_.erase(kGenesis);
    }
  }
  for (TxId id : doomed) nodes_.erase(id);
  if (tips_.empty()) tips_.insert(kGenesis);
  pruned_count_ += doomed.size();
  return doomed.size();
}

LedgerMetrics TracingLedger::metrics(std::int64_t now) const {
  std::shared_lock lock(mu_);
  LedgerMetrics m;
  m.tx_count = nodes_.size() - 1;
  m.bytes_stored = bytes_stored_;
  m.address_bytes = address_bytes_;
  m.pruned_count = pruned_count_;
  auto lo = append_times_.lower_bound(now - config_.tps_window_s);
  auto hi = append_times_.lower_bound(now);
  m.observed_tps = static_cast<double>(std::distance(lo, hi)) /
                   static_cast<double>(config_.tps_window_s);
  return m;
}

std::int64_t TracingLedger::clock() const {
  std::shared_lock lock(mu_);
  return clock_;
}

std::size_t TracingLedger::size() const {
  std::shared_lock lock(mu_);
  return nodes_.size() - 1;
}

std::vector<std::pair<TxId, TracingTx>> TracingLedger::snapshot() const {
  std::shared_lock lock(mu_);
  std::vector<std::pair<TxId, TracingTx>> out;
  out.reserve(nodes_.size());
  for (const auto& [id, node] : nodes_) {
    if (id != kGenesis) out.emplace_back(id, node.tx);
  }
  return out;
}

void TracingLedger::for_each(const std::function<void(TxId, const TracingTx&)>& fn) const {
  std::shared_lock lock(mu_);
  for (const auto& [id, node] : nodes_) {
    if (id != kGenesis) fn(id, node.tx);
  }
}

void TracingLedger::write_jsonl(std::ostream& out) const {
  for (const auto& [id, tx] : snapshot()) {
    nlohmann::json j;
    j["id"] = id;
    j["address"] = tx.address.hex();
    j["ciphertext"] = to_hex(tx.ciphertext);
    j["timestamp"] = tx.timestamp;
    j["parents"] = tx.parents;
    j["untrusted"] = tx.untrusted;
    if (tx.endorsement) {
      j["endorsement"] = {{"diagnostician_id", tx.endorsement->diagnostician_id},
                          {"signature", to_hex(tx.endorsement->signature)}};
    } else {
      j["endorsement"] = nullptr;
    }
    out << j.dump() << '\n';
  }
}

std::string_view to_string(Risk r) { return r == Risk::kHigh ? "High" : "Low"; }

Risk risk_from_string(std::string_view s) {
  if (s == "High") return Risk::kHigh;
  if (s == "Low") return Risk::kLow;
  throw Error(ErrorCode::kInvalidArgument, "unknown risk level " + std::string(s));
}

Bytes notification_message(const Fingerprint& fp, Risk risk, std::int64_t epoch,
                           std::string_view solver_id) {
  Bytes msg;
  put_bytes(msg, as_bytes("beeptrace/notify"));
  put_bytes(msg, fp.digest);
  put_u8(msg, static_cast<std::uint8_t>(risk));
  put_i64(msg, epoch);
  put_bytes(msg, as_bytes(solver_id));
  return msg;
}

void NotificationLedger::authorize_solver(const std::string& id, const PublicKey& pk) {
  std::unique_lock lock(mu_);
  solvers_[id] = pk;
}

std::uint64_t NotificationLedger::append_notification(NotificationEntry entry) {
  std::unique_lock lock(mu_);
  auto solver = solvers_.find(entry.solver_id);
  if (solver == solvers_.end() ||
      !verify_signature(solver->second,
                        notification_message(entry.fingerprint, entry.risk, entry.epoch,
                                             entry.solver_id),
                        entry.signature)) {
    throw Error(ErrorCode::kBadSignature,
                "entry not signed by an authorized solver (" + entry.solver_id + ")");
  }
  auto key = std::make_pair(entry.fingerprint, entry.epoch);
  auto it = latest_.find(key);
  if (it != latest_.end()) {
    if (!(it->second == Risk::kLow && entry.risk == Risk::kHigh)) {
      throw Error(ErrorCode::kDuplicateEntry,
                  "entry exists for " + entry.fingerprint.hex() + " epoch " +
                      std::to_string(entry.epoch));
    }
    it->second = Risk::kHigh;
  } else {
    latest_.emplace(key, entry.risk);
  }
  entries_.push_back(std::move(entry));
  return entries_.size() - 1;
}

bool NotificationLedger::is_authorized(const std::string& id, const PublicKey& pk) const {
  std::shared_lock lock(mu_);
  auto it = solvers_.find(id);
  return it != solvers_.end() && it->second == pk;
}

std::optional<Risk> NotificationLedger::latest(const Fingerprint& fp,
                                               std::int64_t epoch) const {
  std::shared_lock lock(mu_);
  auto it = latest_.find(std::make_pair(fp, epoch));
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

std::vector<NotificationEntry> NotificationLedger::read_notifications(
    std::int64_t since_epoch) const {
  std::shared_lock lock(mu_);
  std::vector<NotificationEntry> out;
  for (const auto& e : entries_) {
    if (e.epoch >= since_epoch) out.push_back(e);
  }
  return out;
}

std::size_t NotificationLedger::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

void NotificationLedger::write_jsonl(std::ostream& out) const {
  std::shared_lock lock(mu_);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    nlohmann::json j = {{"id", i},
                        {"fingerprint", e.fingerprint.hex()},
                        {"risk", std::string(to_string(e.risk))},
                        {"epoch", e.epoch},
                        {"solver_id", e.solver_id},
                        {"signature", to_hex(e.signature)}};
    out << j.dump() << '\n';
  }
}

std::vector<std::pair<TxId, TracingTx>> read_tracing_jsonl(std::istream& in) {
  std::vector<std::pair<TxId, TracingTx>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TracingTx tx;
      tx.address = decode_tracecode(from_hex(j.at("address").get<std::string>()));
      tx.ciphertext = from_hex(j.at("ciphertext").get<std::string>());
      tx.timestamp = j.at("timestamp").get<std::int64_t>();
      tx.parents = j.at("parents").get<std::vector<TxId>>();
      tx.untrusted = j.value("untrusted", false);
      if (j.contains("endorsement") && !j["endorsement"].is_null()) {
        tx.endorsement = Endorsement{
            j["endorsement"].at("diagnostician_id").get<std::string>(),
            from_hex(j["endorsement"].at("signature").get<std::string>())};
      }
      out.emplace_back(j.at("id").get<TxId>(), std::move(tx));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::kConfigError,
                  "tracing snapshot line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<NotificationEntry> read_notification_jsonl(std::istream& in) {
  std::vector<NotificationEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      NotificationEntry e;
      e.fingerprint = Fingerprint::from_hex(j.at("fingerprint").get<std::string>());
      e.risk = risk_from_string(j.at("risk").get<std::string>());
      e.epoch = j.at("epoch").get<std::int64_t>();
      e.solver_id = j.at("solver_id").get<std::string>();
      e.signature = from_hex(j.at("signature").get<std::string>());
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::kConfigError,
                  "notification snapshot line " + std::to_string(line_no) + ": " +
                      ex.what());
    }
  }
  return out;
}

}  // namespace beeptrace
