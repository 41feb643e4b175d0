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
#include <mutex>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "beeptrace/cryptokit.hpp"
#include "beeptrace/geodata.hpp"
#include "beeptrace/ledger.hpp"
#include "beeptrace/tracecode.hpp"

namespace beeptrace {

inline constexpr std::int64_t kSecondsPerDay = 86'400;

inline std::int64_t epoch_of(std::int64_t timestamp) {
  return timestamp >= 0 ? timestamp / kSecondsPerDay
                        : -((-timestamp + kSecondsPerDay - 1) / kSecondsPerDay);
}

// Named polygon standing in for building topology (a mall, a station).
struct Region {
  std::string id;
  std::vector<std::pair<double, double>> polygon;  // (lat, lon) vertices

  bool contains(double lat, double lon) const;
};

struct RegionRule {
  std::string region_id;
  Risk blanket_risk = Risk::kHigh;
};

struct RiskPolicy {
  double high_radius_m = 10.0;
  double high_duration_min = 15.0;
  double low_radius_m = 50.0;
  int window_days = 14;
  std::vector<RegionRule> region_rules;
  // Patient presence in a flagged region marks everyone inside it within
  // +-region_slack_s.
  double region_slack_s = 1800.0;
  // Self-marked symptom registrations are ignored unless this is set, and
  // then they only ever produce Low.
  bool include_self_marked = false;
  double max_gap_s = kDefaultMaxGapS;

  // Throws Error(kBadPolicy).
  void validate() const;
};

struct RiskEndorsement {
  Fingerprint fingerprint;
  Risk risk = Risk::kLow;
  std::int64_t epoch = 0;
  std::int64_t evidence_count = 1;
  // Start of the earliest contact merged into this endorsement.
  double first_contact = 0.0;

  friend bool operator==(const RiskEndorsement&, const RiskEndorsement&) = default;
};

// A decrypted source record from an endorsed (or self-marked) registration.
struct PatientRecord {
  Bytes source_prefix;
  GeoRecord record;
  bool low_evidence = false;
};

struct WindowRecord {
  TraceCode address;
  GeoRecord record;
};

struct TimeRange {
  std::int64_t start = 0;
  std::int64_t end = 0;

  bool contains(std::int64_t t) const { return t >= start && t <= end; }
};

// Decrypted records keyed by address suffix (the ciphertext commitment), so
// repeated solver passes over the same window decrypt each registration once.
// Revocation is still checked on every lookup.
struct DecryptCache {
  std::unordered_map<std::string, std::pair<KeyId, GeoRecord>> records;
  // Suffixes of endorsed registrations whose signature already verified.
  std::unordered_set<std::string> verified;
};

struct ExtractResult {
  std::vector<std::pair<TracingTx, GeoRecord>> records;
  std::size_t skipped_revoked = 0;
  std::size_t skipped_bad_signature = 0;
  std::size_t skipped_corrupt = 0;
};

// Decrypts every endorsed transaction whose endorsement verifies and whose
// record falls inside `window`. Records under revoked keys are skipped and
// counted.
ExtractResult extract_endorsed(const TracingLedger& ledger, const KeyRegistry& keys,
                               TimeRange window, DecryptCache* cache = nullptr);

struct WindowExtract {
  std::vector<WindowRecord> contacts;
  std::vector<PatientRecord> self_marked;
  std::size_t skipped_revoked = 0;
  std::size_t skipped_corrupt = 0;
};

// Decrypts the plain (non-endorsed) registrations in `window`. Self-marked
// registrations are returned separately.
WindowExtract extract_window(const TracingLedger& ledger, const KeyRegistry& keys,
                             TimeRange window, DecryptCache* cache = nullptr);

enum class MatchMode { kSpatialHash, kBruteForce };

// Pair classifications kept between solver runs, keyed by both prefixes and
// the content of both traces. Entries are dropped when the policy changes.
struct MatchCache {
  std::mutex mu;
  std::tuple<double, double, double, double> policy{-1, -1, -1, -1};
  std::unordered_map<std::string, std::vector<RiskEndorsement>> pairs;
};

struct MatchOptions {
  MatchMode mode = MatchMode::kSpatialHash;
  double cell_m = 500.0;
  std::int64_t bucket_s = 3600;
  unsigned workers = 1;
  MatchCache* cache = nullptr;
};

// Classifies every window address co-located with a patient source. One
// endorsement is produced per contact event; call dedup() to merge.
// Throws Error(kBadPolicy).
std::vector<RiskEndorsement> match_contacts(const std::vector<PatientRecord>& patients,
                                            const std::vector<WindowRecord>& window,
                                            const RiskPolicy& policy,
                                            const std::vector<Region>& regions = {},
                                            const MatchOptions& options = {});

// One endorsement per (fingerprint, epoch); High dominates Low and
// evidence_count sums the merged entries. Output is sorted by (epoch, fingerprint).
std::vector<RiskEndorsement> dedup(const std::vector<RiskEndorsement>& endorsements);

struct SolverIdentity {
  std::string solver_id;
  SigningKey key;
};

// Signs and appends each endorsement; entries the ledger rejects as duplicates
// are not counted. Other ledger errors propagate.
std::size_t publish(const std::vector<RiskEndorsement>& endorsements,
                    NotificationLedger& ledger, const SolverIdentity& solver);

// Candidate index over contact traces. Exposed for benchmarking the lookup
// kernel on its own.
class ContactIndex {
 public:
  struct Trace {
    Bytes prefix;
    std::int64_t epoch = 0;
    std::vector<GeoRecord> records;
  };

  ContactIndex(std::vector<Trace> traces, double radius_m, double max_gap_s,
               double cell_m, std::int64_t bucket_s, double max_abs_lat);

  // Per-thread deduplication state for candidates().
  struct Scratch {
    std::vector<std::uint32_t> seen;
    std::uint32_t stamp = 0;
  };

  // Appends traces that may come within radius_m of a patient trace piece:
  // [from, to] is a segment of the patient trace (or a single sample). Each
  // trace is reported at most once per Scratch stamp; call next_query() on the
  // scratch to start a fresh deduplication round.
  void candidates(const GeoRecord& from, const GeoRecord& to, Scratch& scratch,
                  std::vector<std::uint32_t>& out) const;
  void next_query(Scratch& scratch) const;

  const std::vector<Trace>& traces() const { return traces_; }
  std::size_t entry_count() const { return entry_count_; }

 private:
  struct Segment {
    std::uint32_t trace;
    std::int64_t t0, t1;
    double lat0, lat1, lon0, lon1;  // bounding box
  };
  struct CellKey {
    std::int64_t bucket;
    std::int32_t x, y;
    friend bool operator==(const CellKey&, const CellKey&) = default;
  };
  struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const noexcept;
  };

  template <typename Fn>
  void for_each_cell(double lat0, double lat1, double lon0, double lon1, std::int64_t t0,
                     std::int64_t t1, Fn&& fn) const;

  std::vector<Trace> traces_;
  std::vector<Segment> segments_;
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellKeyHash> cells_;
  double pad_lat_, pad_lon_;
  double cell_lat_, cell_lon_;
  std::int64_t bucket_s_;
  std::size_t entry_count_ = 0;
};

// Groups records by prefix into time-sorted traces (duplicate timestamps
// within a prefix keep the first record).
std::vector<ContactIndex::Trace> group_traces(const std::vector<WindowRecord>& window);

struct SolverReport {
  TimeRange window;
  std::size_t patients = 0;
  std::size_t records_scanned = 0;
  std::size_t high_count = 0;
  std::size_t low_count = 0;
  std::size_t skipped_revoked = 0;
  double wall_time_ms = 0.0;
  // Entries accepted by the notification ledger in this run.
  std::size_t published = 0;

  std::string to_json() const;
};

struct SolveOutcome {
  SolverReport report;
  std::vector<RiskEndorsement> endorsements;  // deduplicated
};

// The full solver pass: extract endorsed and window records, match, dedup and
// publish. Window is the policy's window_days ending at `now`.
SolveOutcome run_solver(const TracingLedger& tracing, NotificationLedger& notifications,
                        const KeyRegistry& keys, const SolverIdentity& solver,
                        const RiskPolicy& policy, std::int64_t now,
                        const std::vector<Region>& regions = {},
                        const MatchOptions& options = {}, DecryptCache* cache = nullptr);

}  // namespace beeptrace
