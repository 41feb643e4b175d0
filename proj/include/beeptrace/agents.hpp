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
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "beeptrace/cryptokit.hpp"
#include "beeptrace/geodata.hpp"
#include "beeptrace/ledger.hpp"
#include "beeptrace/rng.hpp"
#include "beeptrace/solver.hpp"
#include "beeptrace/tracecode.hpp"

namespace beeptrace {

enum class UploadPolicy { kImmediate, kBatchedOnCharge };

// Generalizations applied on the device before encryption, in the order
// datum shift, grid, perturbation. Zero disables a step.
struct GeneralizationConfig {
  double grid_m = 0.0;
  double perturb_m = 0.0;
  bool datum_shift = false;
};

struct MobilityParams {
  double center_lat = 55.8721;
  double center_lon = -4.2882;
  double half_extent_m = 2000.0;
  double min_speed_mps = 0.1;
  double max_speed_mps = 1.5;
  double max_dwell_s = 7200.0;
};

// Random waypoint walk on a square around the center. Positions can be queried
// in any order; legs are generated on demand from the walker's own stream.
// Pinned intervals override the walk.
class RandomWaypoint {
 public:
  RandomWaypoint(const MobilityParams& params, Rng rng);

  GeoRecord position(std::int64_t t);
  void pin(std::int64_t from, std::int64_t to, double lat, double lon);

 private:
  struct Leg {
    double t0, t1;
    double x0, y0, x1, y1;
  };
  void extend_to(double t);
  GeoRecord to_geo(double x, double y, std::int64_t t) const;

  MobilityParams params_;
  Rng rng_;
  std::vector<Leg> legs_;
  struct Pin {
    std::int64_t from, to;
    double lat, lon;
  };
  std::vector<Pin> pins_;
};

struct AgentConfig {
  Width width = Width::kW64;
  UploadPolicy upload_policy = UploadPolicy::kImmediate;
  std::uint32_t pseudonyms_per_epoch = 1;
  GeneralizationConfig geodata;
  // Community key for perturbation and datum shift; shared so that samples at
  // one place stay co-located after generalization.
  Bytes community_key;
  // Skip a sample within suppression_m of the last upload as long as the
  // resulting gap stays within max_gap_s.
  bool suppression = false;
  double suppression_m = 20.0;
  double max_gap_s = kDefaultMaxGapS;
  std::int64_t cadence_s = 1800;
  // Plaintext history kept on the device.
  int history_days = 15;
};

// A registration together with the plaintext it carries. Only the simulator
// sees the plaintext; it is the ground truth for the oracle.
struct Emission {
  TracingTx tx;
  GeoRecord record;
  KeyId key_id = 0;
};

struct DisclosedRecord {
  Bytes prefix;
  Bytes suffix;
  GeoRecord record;
};

// What a consenting patient hands to a diagnostician: one ownership proof per
// pseudonym used in the shared window and the matching plaintexts.
struct Disclosure {
  std::vector<OwnershipProof> claims;
  std::vector<DisclosedRecord> records;
};

class UserAgent {
 public:
  UserAgent(const Seed& user_seed, const GeoPublicKey& ca_key, AgentConfig config, Rng rng);

  // Records one raw sample. Returns the registrations to upload now: the new
  // one under Immediate, nothing under Batched-on-charge.
  std::vector<Emission> observe(const GeoRecord& raw);
  // Plug-in event: returns and clears the buffer.
  std::vector<Emission> charge();

  void set_ca_key(const GeoPublicKey& key) { ca_key_ = key; }
  const GeoPublicKey& ca_key() const { return ca_key_; }

  bool consent = true;
  bool isolated = false;

  // Throws Error(kNoConsent).
  Disclosure disclose(ByteView challenge, std::int64_t now, int share_days) const;

  // Own (epoch, risk) verdicts; max risk per epoch, sorted by epoch.
  std::vector<std::pair<std::int64_t, Risk>> self_match(const NotificationLedger& ledger,
                                                        std::int64_t since_epoch) const;

  // Every prefix this agent has used, by epoch.
  std::vector<std::pair<std::int64_t, Bytes>> own_prefixes() const;

  // Encrypted registration for a symptom self-mark (prefix is the plain hash
  // of the code).
  Emission seal_symptom(std::string_view symptom_code, const GeoRecord& raw);

  std::size_t pending() const { return buffer_.size(); }
  const AgentConfig& config() const { return config_; }

 private:
  struct OwnRecord {
    std::int64_t epoch;
    std::uint64_t counter;
    Bytes prefix;
    Bytes suffix;
    GeoRecord record;
  };

  const UserEpochKey& epoch_key(std::int64_t epoch);
  const EnvelopeSession& session(std::int64_t epoch);
  GeoRecord generalize(const GeoRecord& raw) const;
  void forget_before(std::int64_t t);

  Seed seed_;
  GeoPublicKey ca_key_;
  AgentConfig config_;
  Rng rng_;
  std::map<std::int64_t, UserEpochKey> keys_;
  std::map<std::pair<std::int64_t, KeyId>, EnvelopeSession> sessions_;
  std::map<std::int64_t, std::uint64_t> counters_used_;
  std::vector<OwnRecord> history_;
  std::vector<Emission> buffer_;
  std::optional<GeoRecord> last_upload_;
};

// One sample through the device pipeline.
std::vector<TracingTx> user_tick(UserAgent& agent, const GeoRecord& raw);

// Plain-hash prefix used by symptom self-marks.
Bytes symptom_prefix(std::string_view symptom_code, Width width);

class DiagnosticianAgent {
 public:
  DiagnosticianAgent(std::string id, const Seed& seed, Width width);

  const std::string& id() const { return id_; }
  const PublicKey& public_key() const { return signing_.public_key; }

  Bytes issue_challenge(Rng& rng) const;

  struct ConsentEntry {
    std::int64_t time = 0;
    std::size_t claims = 0;
    std::size_t endorsed = 0;
    bool accepted = false;
  };
  const std::vector<ConsentEntry>& consent_log() const { return consent_log_; }
  // Prefix used by the most recent re-coupling.
  const Bytes& last_prefix() const { return last_prefix_; }

 private:
  friend std::size_t diagnose(DiagnosticianAgent&, const Disclosure&, ByteView,
                              TracingLedger&, const GeoPublicKey&, std::int64_t, Rng&);

  std::string id_;
  Seed seed_;
  Width width_;
  SigningKey signing_;
  std::map<std::int64_t, std::uint64_t> cases_per_epoch_;
  std::vector<ConsentEntry> consent_log_;
  Bytes last_prefix_;
};

// Re-couples every disclosed registration: new prefix derived from the
// diagnostician's own key, fresh envelope under `ca_key`, endorsement
// attached, timestamp `now`. Returns the number of transactions appended.
// Throws Error(kOwnershipFailed) before appending anything if any claim fails.
std::size_t diagnose(DiagnosticianAgent& diag, const Disclosure& disclosure,
                     ByteView challenge, TracingLedger& ledger, const GeoPublicKey& ca_key,
                     std::int64_t now, Rng& rng);

// Consent, buffer flush, challenge, disclosure and re-coupling in one step.
// Throws Error(kNoConsent) or Error(kOwnershipFailed).
std::size_t diagnose(DiagnosticianAgent& diag, UserAgent& patient, TracingLedger& ledger,
                     const GeoPublicKey& ca_key, int share_days, std::int64_t now, Rng& rng);

std::vector<std::pair<std::int64_t, Risk>> self_match(const UserAgent& agent,
                                                      const NotificationLedger& ledger,
                                                      std::int64_t since_epoch);

TxId self_mark_symptoms(UserAgent& agent, std::string_view symptom_code, const GeoRecord& raw,
                        TracingLedger& ledger, Rng& rng);

struct CaseSpec {
  int day = 0;
  std::size_t user = 0;
  std::int64_t time_s = 12 * 3600;  // seconds into the day
};

// Holds the patient still and places the contact offset_m east of them.
struct ForcedContact {
  std::size_t patient = 0;
  std::size_t contact = 0;
  int day = 0;
  std::int64_t start_s = 10 * 3600;
  std::int64_t duration_s = 5400;
  double offset_m = 5.0;
};

struct Revocation {
  KeyId key_id = 0;
  int day = 0;
};

struct SelfMark {
  std::size_t user = 0;
  int day = 0;
  std::int64_t time_s = 12 * 3600;
  std::string code;
};

struct Scenario {
  std::size_t users = 50;
  int days = 14;
  std::uint64_t seed = 1;
  std::vector<CaseSpec> cases;
  // Extra cases drawn uniformly among undiagnosed users each day.
  std::size_t daily_cases = 0;
  std::vector<ForcedContact> forced_contacts;
  RiskPolicy policy;
  std::vector<Region> regions;
  GeneralizationConfig geodata;
  MobilityParams mobility;
  int active_start_h = 8;
  int active_end_h = 22;
  std::int64_t cadence_s = 1800;
  UploadPolicy upload_policy = UploadPolicy::kImmediate;
  std::int64_t charge_time_s = 22 * 3600 + 1800;
  Width address_width = Width::kW64;
  std::uint32_t pseudonyms_per_epoch = 1;
  int share_days = 14;
  bool suppression = false;
  double suppression_m = 20.0;
  std::size_t geo_keys = 1;
  std::vector<Revocation> revocations;
  std::vector<SelfMark> self_marks;
  std::size_t diagnosticians = 1;
  bool prune = true;
  MatchOptions match;
  // Replays recorded traces instead of the random walk; users and days are
  // then taken from the file.
  std::optional<std::filesystem::path> trace_csv;

  // Throws Error(kConfigError).
  void validate() const;
};

// Throws Error(kConfigError) on malformed JSON, unknown keys or bad values.
Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::filesystem::path& path);

// Key material a scenario's CA, solver and diagnosticians derive from its
// seed. Re-deriving it lets a saved run be solved again.
struct ScenarioAuthorities {
  std::vector<GeoEnvelopeKey> geo_keys;  // ids 1..n, none revoked
  SolverIdentity solver;
  std::vector<std::pair<std::string, Seed>> diagnosticians;
  Bytes community_key;
};

ScenarioAuthorities derive_authorities(const Scenario& s);

// Plaintext view of everything a scenario put on the tracing chain.
struct GroundTruth {
  struct Upload {
    std::size_t user = 0;
    Bytes prefix;
    GeoRecord record;
    std::int64_t uploaded_at = 0;
    KeyId key_id = 0;
    bool untrusted = false;
  };
  struct Case {
    std::size_t user = 0;
    std::int64_t time = 0;
    KeyId key_id = 0;
    Bytes new_prefix;
    std::vector<GeoRecord> records;
    std::vector<Bytes> original_prefixes;
  };
  std::vector<Upload> uploads;
  std::vector<Case> cases;
  std::map<KeyId, std::int64_t> revoked_at;
  std::vector<std::int64_t> solver_times;
};

using ExposureMap = std::map<std::pair<std::size_t, std::int64_t>, Risk>;

// Brute-force classification over the ground truth: every solver run is
// replayed on the plaintext records visible to it, and every contact trace is
// compared with every case. Region rules and self-marks are not modeled.
ExposureMap plaintext_oracle(const GroundTruth& truth, const RiskPolicy& policy);

struct LatencySummary {
  std::size_t count = 0;
  double min_s = 0, p50_s = 0, p90_s = 0, max_s = 0, mean_s = 0;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision() const { return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp); }
  double recall() const { return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn); }
};

struct MetricsSample {
  std::int64_t timestamp = 0;
  LedgerMetrics metrics;
};

struct ScenarioReport {
  std::size_t users = 0;
  int days = 0;
  std::uint64_t seed = 0;
  std::size_t diagnoses = 0;
  std::size_t endorsed_txs = 0;
  std::size_t ownership_failures = 0;
  std::size_t self_marks = 0;
  std::size_t tracing_appended = 0;
  LedgerMetrics ledger;
  std::size_t notifications = 0;
  std::vector<SolverReport> solver_runs;
  LatencySummary latency;
  std::size_t pipeline_high = 0;
  std::size_t pipeline_low = 0;
  std::size_t oracle_high = 0;
  std::size_t oracle_low = 0;
  Confusion high_confusion;
  double solver_wall_ms = 0;
  double total_wall_ms = 0;

  // Deterministic for a fixed scenario; wall-clock figures are excluded.
  std::string to_json() const;
  std::string timing_json() const;
};

struct ScenarioResult {
  ScenarioReport report;
  std::unique_ptr<TracingLedger> tracing;
  std::unique_ptr<NotificationLedger> notifications;
  std::unique_ptr<KeyRegistry> keys;
  // self_match output per user index.
  std::vector<std::vector<std::pair<std::int64_t, Risk>>> exposures;
  ExposureMap pipeline;
  ExposureMap oracle;
  GroundTruth truth;
  std::vector<Seed> user_seeds;
  std::vector<std::string> user_ids;
  std::vector<MetricsSample> metrics;
};

// Throws Error(kConfigError).
ScenarioResult run_scenario(const Scenario& s);

// report.json, timing.json, tracing.jsonl, notification.jsonl, metrics.csv and
// keys.json under `dir` (created if missing). Throws Error(kIoError).
void write_scenario_outputs(const ScenarioResult& result, const std::filesystem::path& dir);

}  // namespace beeptrace
