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

#include "beeptrace/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <thread>

#include "beeptrace/error.hpp"
#include "json.hpp"

namespace beeptrace {

namespace {

constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;

std::string suffix_key(const TraceCode& address) {
  ByteView s = address.suffix();
  return std::string(reinterpret_cast<const char*>(s.data()), s.size());
}

// Decrypts through the cache. Returns nullopt and bumps the matching counter on
// a revoked key or a corrupt envelope.
std::optional<GeoRecord> open_record(const TracingTx& tx, const KeyRegistry& keys,
                                     DecryptCache* cache, std::size_t& revoked,
                                     std::size_t& corrupt) {
  KeyId key_id;
  try {
    key_id = ciphertext_key_id(tx.ciphertext);
  } catch (const Error&) {
    ++corrupt;
    return std::nullopt;
  }
  if (!keys.contains(key_id)) {
    ++corrupt;
    return std::nullopt;
  }
  if (keys.is_revoked(key_id)) {
    ++revoked;
    return std::nullopt;
  }
  if (cache) {
    auto it = cache->records.find(suffix_key(tx.address));
    if (it != cache->records.end()) return it->second.second;
  }
  try {
    GeoRecord r = keys.decrypt(tx.ciphertext);
    if (cache) cache->records.emplace(suffix_key(tx.address), std::make_pair(key_id, r));
    return r;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kKeyRevoked) {
      ++revoked;
    } else {
      ++corrupt;
    }
    return std::nullopt;
  }
}

struct PatientTrace {
  Bytes prefix;
  bool low_evidence = false;
  std::vector<GeoRecord> records;
};

std::vector<PatientTrace> group_patients(const std::vector<PatientRecord>& patients,
                                         bool include_low_evidence) {
  std::map<Bytes, PatientTrace> by_prefix;
  std::uint64_t singleton = 0;
  for (const PatientRecord& p : patients) {
    if (p.low_evidence && !include_low_evidence) continue;
    // Self-marked prefixes are shared by everyone reporting the same code, so
    // each such record stands alone rather than being joined into a trace.
    Bytes key = p.source_prefix;
    if (p.low_evidence) {
      key.push_back(0xff);
      put_u64(key, singleton++);
    }
    PatientTrace& t = by_prefix[key];
    t.prefix = p.source_prefix;
    t.low_evidence = t.low_evidence || p.low_evidence;
    t.records.push_back(p.record);
  }
  std::vector<PatientTrace> out;
  for (auto& [prefix, t] : by_prefix) {
    std::stable_sort(t.records.begin(), t.records.end(),
                     [](const GeoRecord& a, const GeoRecord& b) {
                       return a.timestamp < b.timestamp;
                     });
    t.records.erase(std::unique(t.records.begin(), t.records.end(),
                                [](const GeoRecord& a, const GeoRecord& b) {
                                  return a.timestamp == b.timestamp;
                                }),
                    t.records.end());
    out.push_back(std::move(t));
  }
  return out;
}

void classify_pair(const PatientTrace& patient, const ContactIndex::Trace& contact,
                   const RiskPolicy& policy, std::vector<RiskEndorsement>& out) {
  std::optional<std::vector<ContactEvent>> low_events;
  if (policy.high_radius_m <= policy.low_radius_m) {
    low_events =
        colocation(patient.records, contact.records, policy.low_radius_m, policy.max_gap_s);
    if (low_events->empty()) return;
  }
  auto high_events =
      colocation(patient.records, contact.records, policy.high_radius_m, policy.max_gap_s);
  const double high_duration_s = policy.high_duration_min * 60.0;
  Fingerprint fp = fingerprint(contact.prefix);
  bool high = false;
  if (!patient.low_evidence) {
    for (const ContactEvent& e : high_events) {
      if (e.duration() >= high_duration_s) {
        out.push_back({fp, Risk::kHigh, contact.epoch, 1, e.start});
        high = true;
      }
    }
  }
  if (high) return;
  if (!low_events) {
    low_events =
        colocation(patient.records, contact.records, policy.low_radius_m, policy.max_gap_s);
  }
  const auto& events = low_events->empty() ? high_events : *low_events;
  for (const ContactEvent& e : events) {
    out.push_back({fp, Risk::kLow, contact.epoch, 1, e.start});
  }
}

std::string trace_key(ByteView prefix, const std::vector<GeoRecord>& records) {
  std::string key(reinterpret_cast<const char*>(prefix.data()), prefix.size());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 0x100000001b3ULL;
  };
  for (const GeoRecord& r : records) {
    mix(&r.timestamp, sizeof r.timestamp);
    mix(&r.lat, sizeof r.lat);
    mix(&r.lon, sizeof r.lon);
  }
  const std::uint64_t n = records.size();
  key.append(reinterpret_cast<const char*>(&n), sizeof n);
  key.append(reinterpret_cast<const char*>(&h), sizeof h);
  return key;
}

void classify_cached(const PatientTrace& patient, const std::string& patient_key,
                     const ContactIndex::Trace& contact, const std::string& contact_key,
                     const RiskPolicy& policy, MatchCache* cache,
                     std::vector<RiskEndorsement>& out) {
  if (!cache) {
    classify_pair(patient, contact, policy, out);
    return;
  }
  std::string key = patient_key;
  key += patient.low_evidence ? '\1' : '\0';
  key += contact_key;
  {
    std::lock_guard lock(cache->mu);
    auto it = cache->pairs.find(key);
    if (it != cache->pairs.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
      return;
    }
  }
  std::vector<RiskEndorsement> found;
  classify_pair(patient, contact, policy, found);
  out.insert(out.end(), found.begin(), found.end());
  std::lock_guard lock(cache->mu);
  cache->pairs.emplace(std::move(key), std::move(found));
}

void apply_region_rules(const std::vector<PatientTrace>& patients,
                        const std::vector<ContactIndex::Trace>& contacts,
                        const RiskPolicy& policy, const std::vector<Region>& regions,
                        std::vector<RiskEndorsement>& out) {
  for (const RegionRule& rule : policy.region_rules) {
    auto region = std::find_if(regions.begin(), regions.end(),
                               [&](const Region& r) { return r.id == rule.region_id; });
    if (region == regions.end()) {
      throw Error(ErrorCode::kBadPolicy, "unknown region " + rule.region_id);
    }
    std::vector<std::int64_t> flagged_times;
    for (const PatientTrace& p : patients) {
      if (p.low_evidence) continue;
      for (const GeoRecord& r : p.records) {
        if (region->contains(r.lat, r.lon)) flagged_times.push_back(r.timestamp);
      }
    }
    if (flagged_times.empty()) continue;
    std::sort(flagged_times.begin(), flagged_times.end());
    for (const ContactIndex::Trace& c : contacts) {
      for (const GeoRecord& r : c.records) {
        if (!region->contains(r.lat, r.lon)) continue;
        auto it = std::lower_bound(flagged_times.begin(), flagged_times.end(),
                                   static_cast<std::int64_t>(std::ceil(
                                       r.timestamp - policy.region_slack_s)));
        if (it != flagged_times.end() &&
            static_cast<double>(*it) <= r.timestamp + policy.region_slack_s) {
          out.push_back({fingerprint(c.prefix), rule.blanket_risk, c.epoch, 1,
                         static_cast<double>(r.timestamp)});
        }
      }
    }
  }
}

}  // namespace

bool Region::contains(double lat, double lon) const {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    auto [yi, xi] = polygon[i];
    auto [yj, xj] = polygon[j];
    if ((yi > lat) != (yj > lat) && lon < (xj - xi) * (lat - yi) / (yj - yi) + xi) {
      inside = !inside;
    }
  }
  return inside;
}

void RiskPolicy::validate() const {
  if (!(high_radius_m > 0) || !(low_radius_m > 0)) {
    throw Error(ErrorCode::kBadPolicy, "radii must be positive");
  }
  if (!(high_duration_min > 0)) {
    throw Error(ErrorCode::kBadPolicy, "high_duration_min must be positive");
  }
  if (window_days < 1) throw Error(ErrorCode::kBadPolicy, "window must be >= 1 day");
  if (!(region_slack_s >= 0) || !(max_gap_s > 0)) {
    throw Error(ErrorCode::kBadPolicy, "slack and max gap must be non-negative");
  }
}

ExtractResult extract_endorsed(const TracingLedger& ledger, const KeyRegistry& keys,
                               TimeRange window, DecryptCache* cache) {
  ExtractResult out;
  std::vector<TracingTx> endorsed;
  ledger.for_each([&](TxId, const TracingTx& tx) {
    if (tx.endorsed()) endorsed.push_back(tx);
  });
  for (TracingTx& tx : endorsed) {
    const bool known_good = cache && cache->verified.contains(suffix_key(tx.address));
    if (!known_good) {
      if (!ledger.verify_endorsement(tx)) {
        ++out.skipped_bad_signature;
        continue;
      }
      if (cache) cache->verified.insert(suffix_key(tx.address));
    }
    auto record = open_record(tx, keys, cache, out.skipped_revoked, out.skipped_corrupt);
    if (!record || !window.contains(record->timestamp)) continue;
    out.records.emplace_back(std::move(tx), std::move(*record));
  }
  return out;
}

WindowExtract extract_window(const TracingLedger& ledger, const KeyRegistry& keys,
                             TimeRange window, DecryptCache* cache) {
  WindowExtract out;
  ledger.for_each([&](TxId, const TracingTx& tx) {
    if (tx.endorsed()) return;
    auto record = open_record(tx, keys, cache, out.skipped_revoked, out.skipped_corrupt);
    if (!record || !window.contains(record->timestamp)) return;
    if (tx.untrusted) {
      ByteView prefix = tx.address.prefix();
      out.self_marked.push_back({Bytes(prefix.begin(), prefix.end()), *record, true});
    } else {
      out.contacts.push_back({tx.address, std::move(*record)});
    }
  });
  return out;
}

std::vector<ContactIndex::Trace> group_traces(const std::vector<WindowRecord>& window) {
  std::map<Bytes, ContactIndex::Trace> by_prefix;
  for (const WindowRecord& w : window) {
    ByteView p = w.address.prefix();
    Bytes prefix(p.begin(), p.end());
    auto [it, inserted] = by_prefix.try_emplace(prefix);
    if (inserted) it->second.prefix = prefix;
    it->second.records.push_back(w.record);
  }
  std::vector<ContactIndex::Trace> out;
  out.reserve(by_prefix.size());
  for (auto& [prefix, trace] : by_prefix) {
    auto& recs = trace.records;
    std::stable_sort(recs.begin(), recs.end(), [](const GeoRecord& a, const GeoRecord& b) {
      return a.timestamp < b.timestamp;
    });
    recs.erase(std::unique(recs.begin(), recs.end(),
                           [](const GeoRecord& a, const GeoRecord& b) {
                             return a.timestamp == b.timestamp;
                           }),
               recs.end());
    trace.epoch = epoch_of(recs.front().timestamp);
    out.push_back(std::move(trace));
  }
  return out;
}

std::size_t ContactIndex::CellKeyHash::operator()(const CellKey& k) const noexcept {
  std::uint64_t h = static_cast<std::uint64_t>(k.bucket) * 0x9e3779b97f4a7c15ULL;
  h ^= (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.x)) << 32 |
        static_cast<std::uint32_t>(k.y)) +
       0x7f4a7c159e3779b9ULL + (h << 6) + (h >> 2);
  return static_cast<std::size_t>(h ^ (h >> 29));
}

ContactIndex::ContactIndex(std::vector<Trace> traces, double radius_m, double max_gap_s,
                           double cell_m, std::int64_t bucket_s, double max_abs_lat)
    : traces_(std::move(traces)), bucket_s_(bucket_s) {
  const double cos_min =
      std::cos(std::min(std::abs(max_abs_lat), 89.9) * std::numbers::pi / 180.0);
  // Conservative padding so that every pair within radius_m under any local
  // equirectangular metric in the data's latitude band is found.
  pad_lat_ = radius_m / kMetersPerDegree * (1 + 1e-9) + 1e-12;
  pad_lon_ = radius_m / (kMetersPerDegree * cos_min) * (1 + 1e-9) + 1e-12;
  cell_lat_ = cell_m / kMetersPerDegree;
  cell_lon_ = cell_m / (kMetersPerDegree * cos_min);

  for (std::uint32_t ti = 0; ti < traces_.size(); ++ti) {
    const auto& recs = traces_[ti].records;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const bool joins_prev =
          i > 0 && static_cast<double>(recs[i].timestamp - recs[i - 1].timestamp) <= max_gap_s;
      const bool joins_next =
          i + 1 < recs.size() &&
          static_cast<double>(recs[i + 1].timestamp - recs[i].timestamp) <= max_gap_s;
      if (joins_next) {
        const GeoRecord& a = recs[i];
        const GeoRecord& b = recs[i + 1];
        segments_.push_back({ti, a.timestamp, b.timestamp, std::min(a.lat, b.lat),
                             std::max(a.lat, b.lat), std::min(a.lon, b.lon),
                             std::max(a.lon, b.lon)});
      } else if (!joins_prev) {
        const GeoRecord& a = recs[i];
        segments_.push_back({ti, a.timestamp, a.timestamp, a.lat, a.lat, a.lon, a.lon});
      }
    }
  }
  for (std::uint32_t si = 0; si < segments_.size(); ++si) {
    const Segment& s = segments_[si];
    for_each_cell(s.lat0, s.lat1, s.lon0, s.lon1, s.t0, s.t1, [&](const CellKey& key) {
      cells_[key].push_back(si);
      ++entry_count_;
    });
  }
}

template <typename Fn>
void ContactIndex::for_each_cell(double lat0, double lat1, double lon0, double lon1,
                                 std::int64_t t0, std::int64_t t1, Fn&& fn) const {
  auto floor_div = [](std::int64_t a, std::int64_t b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
  };
  const std::int64_t b0 = floor_div(t0, bucket_s_), b1 = floor_div(t1, bucket_s_);
  const auto x0 = static_cast<std::int32_t>(std::floor(lon0 / cell_lon_));
  const auto x1 = static_cast<std::int32_t>(std::floor(lon1 / cell_lon_));
  const auto y0 = static_cast<std::int32_t>(std::floor(lat0 / cell_lat_));
  const auto y1 = static_cast<std::int32_t>(std::floor(lat1 / cell_lat_));
  for (std::int64_t b = b0; b <= b1; ++b) {
    for (std::int32_t x = x0; x <= x1; ++x) {
      for (std::int32_t y = y0; y <= y1; ++y) fn(CellKey{b, x, y});
    }
  }
}

void ContactIndex::next_query(Scratch& scratch) const {
  if (scratch.seen.size() != traces_.size()) {
    scratch.seen.assign(traces_.size(), 0);
    scratch.stamp = 0;
  }
  if (++scratch.stamp == 0) {
    std::fill(scratch.seen.begin(), scratch.seen.end(), 0);
    scratch.stamp = 1;
  }
}

void ContactIndex::candidates(const GeoRecord& from, const GeoRecord& to, Scratch& scratch,
                              std::vector<std::uint32_t>& out) const {
  if (scratch.seen.size() != traces_.size()) next_query(scratch);
  const double lat0 = std::min(from.lat, to.lat) - pad_lat_;
  const double lat1 = std::max(from.lat, to.lat) + pad_lat_;
  const double lon0 = std::min(from.lon, to.lon) - pad_lon_;
  const double lon1 = std::max(from.lon, to.lon) + pad_lon_;
  const std::int64_t t0 = std::min(from.timestamp, to.timestamp);
  const std::int64_t t1 = std::max(from.timestamp, to.timestamp);
  for_each_cell(lat0, lat1, lon0, lon1, t0, t1, [&](const CellKey& key) {
    auto it = cells_.find(key);
    if (it == cells_.end()) return;
    for (std::uint32_t si : it->second) {
      const Segment& s = segments_[si];
      if (scratch.seen[s.trace] == scratch.stamp) continue;
      if (s.t1 < t0 || s.t0 > t1) continue;
      if (s.lat1 < lat0 || s.lat0 > lat1 || s.lon1 < lon0 || s.lon0 > lon1) continue;
      scratch.seen[s.trace] = scratch.stamp;
      out.push_back(s.trace);
    }
  });
}

std::vector<RiskEndorsement> match_contacts(const std::vector<PatientRecord>& patients,
                                            const std::vector<WindowRecord>& window,
                                            const RiskPolicy& policy,
                                            const std::vector<Region>& regions,
                                            const MatchOptions& options) {
  policy.validate();
  std::vector<PatientTrace> patient_traces =
      group_patients(patients, policy.include_self_marked);
  std::vector<ContactIndex::Trace> contact_traces = group_traces(window);
  std::vector<RiskEndorsement> out;
  if (patient_traces.empty() || contact_traces.empty()) return out;

  double max_abs_lat = 0;
  for (const auto& p : patient_traces) {
    for (const auto& r : p.records) max_abs_lat = std::max(max_abs_lat, std::abs(r.lat));
  }
  for (const auto& c : contact_traces) {
    for (const auto& r : c.records) max_abs_lat = std::max(max_abs_lat, std::abs(r.lat));
  }
  const double search_radius = std::max(policy.high_radius_m, policy.low_radius_m);
  if (options.cache) {
    const std::tuple<double, double, double, double> fields{
        policy.high_radius_m, policy.high_duration_min, policy.low_radius_m, policy.max_gap_s};
    std::lock_guard lock(options.cache->mu);
    if (options.cache->policy != fields) {
      options.cache->pairs.clear();
      options.cache->policy = fields;
    }
  }

  std::optional<ContactIndex> index;
  if (options.mode == MatchMode::kSpatialHash) {
    index.emplace(std::move(contact_traces), search_radius, policy.max_gap_s, options.cell_m,
                  options.bucket_s, max_abs_lat);
  }
  const std::vector<ContactIndex::Trace>& contacts =
      index ? index->traces() : contact_traces;
  std::vector<std::string> contact_keys(options.cache ? contacts.size() : 0);
  for (std::size_t i = 0; i < contact_keys.size(); ++i) {
    contact_keys[i] = trace_key(contacts[i].prefix, contacts[i].records);
  }

  auto match_one = [&](const PatientTrace& patient, ContactIndex::Scratch& scratch,
                       std::vector<RiskEndorsement>& sink) {
    std::vector<std::uint32_t> candidates;
    if (index) {
      index->next_query(scratch);
      const auto& recs = patient.records;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const bool joins_next =
            i + 1 < recs.size() &&
            static_cast<double>(recs[i + 1].timestamp - recs[i].timestamp) <=
                policy.max_gap_s;
        index->candidates(recs[i], joins_next ? recs[i + 1] : recs[i], scratch, candidates);
      }
      std::sort(candidates.begin(), candidates.end());
    } else {
      candidates.resize(contacts.size());
      for (std::uint32_t i = 0; i < contacts.size(); ++i) candidates[i] = i;
    }
    const std::string patient_key =
        options.cache ? trace_key(patient.prefix, patient.records) : std::string();
    for (std::uint32_t c : candidates) {
      classify_cached(patient, patient_key, contacts[c],
                      options.cache ? contact_keys[c] : patient_key, policy, options.cache,
                      sink);
    }
  };

  const unsigned workers =
      std::max(1u, std::min<unsigned>(options.workers,
                                      static_cast<unsigned>(patient_traces.size())));
  if (workers == 1) {
    ContactIndex::Scratch scratch;
    for (const PatientTrace& p : patient_traces) match_one(p, scratch, out);
  } else {
    // Contiguous partitions keep the output order independent of scheduling.
    std::vector<std::vector<RiskEndorsement>> partial(workers);
    std::vector<std::thread> threads;
    const std::size_t per = (patient_traces.size() + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        ContactIndex::Scratch scratch;
        const std::size_t lo = w * per;
        const std::size_t hi = std::min(patient_traces.size(), lo + per);
        for (std::size_t i = lo; i < hi; ++i) match_one(patient_traces[i], scratch, partial[w]);
      });
    }
    for (auto& t : threads) t.join();
    for (auto& part : partial) out.insert(out.end(), part.begin(), part.end());
  }

  if (!policy.region_rules.empty()) {
    apply_region_rules(patient_traces, contacts, policy, regions, out);
  }
  return out;
}

std::vector<RiskEndorsement> dedup(const std::vector<RiskEndorsement>& endorsements) {
  std::map<std::pair<std::int64_t, Fingerprint>, RiskEndorsement> merged;
  for (const RiskEndorsement& e : endorsements) {
    auto key = std::make_pair(e.epoch, e.fingerprint);
    auto [it, inserted] = merged.try_emplace(key, e);
    if (inserted) continue;
    RiskEndorsement& m = it->second;
    m.risk = std::max(m.risk, e.risk);
    m.evidence_count += e.evidence_count;
    m.first_contact = std::min(m.first_contact, e.first_contact);
  }
  std::vector<RiskEndorsement> out;
  out.reserve(merged.size());
  for (auto& [key, e] : merged) out.push_back(e);
  return out;
}

std::size_t publish(const std::vector<RiskEndorsement>& endorsements,
                    NotificationLedger& ledger, const SolverIdentity& solver) {
  std::size_t accepted = 0;
  if (!endorsements.empty() &&
      !ledger.is_authorized(solver.solver_id, solver.key.public_key)) {
    throw Error(ErrorCode::kBadSignature, "solver " + solver.solver_id + " is not authorized");
  }
  for (const RiskEndorsement& e : endorsements) {
    const std::optional<Risk> seen = ledger.latest(e.fingerprint, e.epoch);
    if (seen && (*seen == Risk::kHigh || e.risk == Risk::kLow)) continue;
    NotificationEntry entry;
    entry.fingerprint = e.fingerprint;
    entry.risk = e.risk;
    entry.epoch = e.epoch;
    entry.solver_id = solver.solver_id;
    entry.signature =
        solver.key.sign(notification_message(e.fingerprint, e.risk, e.epoch, solver.solver_id));
    try {
      ledger.append_notification(std::move(entry));
      ++accepted;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::kDuplicateEntry) throw;
    }
  }
  return accepted;
}

std::string SolverReport::to_json() const {
  nlohmann::json j = {{"window", {{"start", window.start}, {"end", window.end}}},
                      {"patients", patients},
                      {"records_scanned", records_scanned},
                      {"high_count", high_count},
                      {"low_count", low_count},
                      {"skipped_revoked", skipped_revoked},
                      {"wall_time_ms", wall_time_ms}};
  return j.dump();
}

SolveOutcome run_solver(const TracingLedger& tracing, NotificationLedger& notifications,
                        const KeyRegistry& keys, const SolverIdentity& solver,
                        const RiskPolicy& policy, std::int64_t now,
                        const std::vector<Region>& regions, const MatchOptions& options,
                        DecryptCache* cache) {
  policy.validate();
  const auto started = std::chrono::steady_clock::now();
  SolveOutcome outcome;
  SolverReport& report = outcome.report;
  report.window = {now - static_cast<std::int64_t>(policy.window_days) * kSecondsPerDay, now};

  ExtractResult endorsed = extract_endorsed(tracing, keys, report.window, cache);
  WindowExtract window = extract_window(tracing, keys, report.window, cache);

  std::vector<PatientRecord> sources;
  for (const auto& [tx, record] : endorsed.records) {
    ByteView p = tx.address.prefix();
    sources.push_back({Bytes(p.begin(), p.end()), record, false});
  }
  if (policy.include_self_marked) {
    sources.insert(sources.end(), window.self_marked.begin(), window.self_marked.end());
  }
  std::vector<Bytes> distinct;
  for (const auto& s : sources) distinct.push_back(s.source_prefix);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  report.patients = distinct.size();
  report.records_scanned = window.contacts.size();
  report.skipped_revoked = endorsed.skipped_revoked + window.skipped_revoked;

  outcome.endorsements = dedup(match_contacts(sources, window.contacts, policy, regions, options));
  for (const auto& e : outcome.endorsements) {
    (e.risk == Risk::kHigh ? report.high_count : report.low_count)++;
  }
  report.published = publish(outcome.endorsements, notifications, solver);
  report.wall_time_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - started)
                            .count();
  return outcome;
}

}  // namespace beeptrace
