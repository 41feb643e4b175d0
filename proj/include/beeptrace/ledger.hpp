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

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "beeptrace/bytes.hpp"
#include "beeptrace/cryptokit.hpp"
#include "beeptrace/rng.hpp"
#include "beeptrace/tracecode.hpp"

namespace beeptrace {

using TxId = std::uint64_t;
inline constexpr TxId kGenesis = 0;

struct Endorsement {
  std::string diagnostician_id;
  Bytes signature;

  friend bool operator==(const Endorsement&, const Endorsement&) = default;
};

// One registration on the tracing chain.
struct TracingTx {
  TraceCode address;
  Bytes ciphertext;
  std::optional<Endorsement> endorsement;
  std::int64_t timestamp = 0;
  std::vector<TxId> parents;
  // Self-marked symptom registrations carry no CA or diagnostician trust.
  bool untrusted = false;

  bool endorsed() const { return endorsement.has_value(); }

  friend bool operator==(const TracingTx&, const TracingTx&) = default;
};

// Bytes a diagnostician signs when endorsing a re-coupled address.
Bytes endorsement_message(const TraceCode& address, ByteView ciphertext,
                          std::int64_t timestamp);

Bytes serialize_tx(const TracingTx& tx);

struct LedgerMetrics {
  std::size_t tx_count = 0;
  std::size_t bytes_stored = 0;   // serialized size of live transactions
  std::size_t address_bytes = 0;  // TraceCode bytes of live transactions
  double observed_tps = 0.0;
  std::size_t pruned_count = 0;
};

struct LedgerConfig {
  std::int64_t clock_skew_s = 300;
  std::int64_t tps_window_s = 3600;
};

// DAG-shaped append-only tracing ledger. Every transaction references one or
// two live transactions (or genesis). Pruning removes old transactions and
// re-roots their surviving children at genesis; stored payloads are never
// modified. All members are safe to call concurrently.
class TracingLedger {
 public:
  explicit TracingLedger(LedgerConfig config = {});

  void authorize_diagnostician(const std::string& id, const PublicKey& pk);
  bool verify_endorsement(const TracingTx& tx) const;

  // Throws Error(kUnknownParent), Error(kStaleTimestamp), Error(kBadSignature),
  // or Error(kInvalidArgument) for a parent list that is empty, longer than
  // two, or repeats an id.
  TxId append_tracing(TracingTx tx);

  // One or two distinct live tips chosen uniformly at random.
  std::vector<TxId> select_tips(Rng& rng) const;
  std::vector<TxId> tips() const;

  std::vector<TracingTx> lookup_by_suffix(ByteView suffix) const;
  std::vector<std::pair<TxId, TracingTx>> lookup_by_prefix(ByteView prefix) const;

  std::optional<TracingTx> get(TxId id) const;
  // Effective parent links after re-rooting; genesis has none.
  std::vector<TxId> links(TxId id) const;
  bool is_live(TxId id) const;

  // Removes every transaction with timestamp < now - horizon_s, where `now`
  // defaults to the newest timestamp seen. Returns the number removed.
  std::size_t prune(std::int64_t horizon_s);
  std::size_t prune(std::int64_t horizon_s, std::int64_t now);

  // observed_tps counts appends with timestamp in [now - window, now).
  LedgerMetrics metrics(std::int64_t now) const;
  LedgerMetrics metrics() const { return metrics(clock()); }

  std::int64_t clock() const;
  std::size_t size() const;

  // Live transactions in id order.
  std::vector<std::pair<TxId, TracingTx>> snapshot() const;
  // Visits live transactions in id order under a shared lock; `fn` must not
  // call back into the ledger for writing.
  void for_each(const std::function<void(TxId, const TracingTx&)>& fn) const;
  void write_jsonl(std::ostream& out) const;

 private:
  struct Node {
    TracingTx tx;
    std::vector<TxId> links;
    std::size_t bytes = 0;
    std::size_t children = 0;
  };

  std::size_t prune_locked(std::int64_t cutoff);

  LedgerConfig config_;
  mutable std::shared_mutex mu_;
  std::map<TxId, Node> nodes_;
  std::set<TxId> tips_;
  std::unordered_map<std::string, std::vector<TxId>> by_suffix_;
  std::unordered_map<std::string, std::vector<TxId>> by_prefix_;
  std::map<std::string, PublicKey> diagnosticians_;
  std::multiset<std::int64_t> append_times_;
  TxId next_id_ = 1;
  std::int64_t clock_ = 0;
  std::size_t bytes_stored_ = 0;
  std::size_t address_bytes_ = 0;
  std::size_t pruned_count_ = 0;
};

enum class Risk : std::uint8_t { kLow = 1, kHigh = 2 };

std::string_view to_string(Risk r);
Risk risk_from_string(std::string_view s);

struct NotificationEntry {
  Fingerprint fingerprint;
  Risk risk = Risk::kLow;
  std::int64_t epoch = 0;
  std::string solver_id;
  Bytes signature;

  friend bool operator==(const NotificationEntry&, const NotificationEntry&) = default;
};

// Bytes an authorized solver signs for an entry.
Bytes notification_message(const Fingerprint& fp, Risk risk, std::int64_t epoch,
                           std::string_view solver_id);

// Linear log of solver verdicts. At most one entry per (fingerprint, epoch),
// except that a High verdict may follow an earlier Low one.
class NotificationLedger {
 public:
  void authorize_solver(const std::string& id, const PublicKey& pk);

  // Throws Error(kBadSignature) or Error(kDuplicateEntry).
  std::uint64_t append_notification(NotificationEntry entry);

  // Entries with epoch >= since_epoch, in append order.
  std::vector<NotificationEntry> read_notifications(std::int64_t since_epoch) const;

  bool is_authorized(const std::string& id, const PublicKey& pk) const;

  // Risk currently recorded for (fingerprint, epoch), if any.
  std::optional<Risk> latest(const Fingerprint& fp, std::int64_t epoch) const;

  std::size_t size() const;
  void write_jsonl(std::ostream& out) const;

 private:
  mutable std::shared_mutex mu_;
  std::vector<NotificationEntry> entries_;
  std::map<std::pair<Fingerprint, std::int64_t>, Risk> latest_;
  std::map<std::string, PublicKey> solvers_;
};

// Readers for the JSON-lines snapshots; no signature validation is done.
std::vector<std::pair<TxId, TracingTx>> read_tracing_jsonl(std::istream& in);
std::vector<NotificationEntry> read_notification_jsonl(std::istream& in);

}  // namespace beeptrace
