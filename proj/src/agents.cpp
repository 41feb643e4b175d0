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

#include "beeptrace/agents.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>
#include <type_traits>

#include "beeptrace/error.hpp"
#include "json.hpp"
#include "sodium_init.hpp"

namespace beeptrace {

namespace {

constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;

std::string bytes_key(ByteView b) {
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Mobility

RandomWaypoint::RandomWaypoint(const MobilityParams& params, Rng rng)
    : params_(params), rng_(std::move(rng)) {}

GeoRecord RandomWaypoint::to_geo(double x, double y, std::int64_t t) const {
  GeoRecord r;
  r.lat = params_.center_lat + y / kMetersPerDegree;
  r.lon = params_.center_lon +
          x / (kMetersPerDegree * std::cos(params_.center_lat * std::numbers::pi / 180.0));
  r.timestamp = t;
  return r;
}

void RandomWaypoint::extend_to(double t) {
  const double h = params_.half_extent_m;
  if (legs_.empty()) {
    double x = rng_.uniform(-h, h), y = rng_.uniform(-h, h);
    legs_.push_back({0.0, rng_.uniform(0.0, params_.max_dwell_s), x, y, x, y});
  }
  while (legs_.back().t1 < t) {
    const Leg& last = legs_.back();
    const double x0 = last.x1, y0 = last.y1, t0 = last.t1;
    const double x1 = rng_.uniform(-h, h), y1 = rng_.uniform(-h, h);
    const double speed = rng_.uniform(params_.min_speed_mps, params_.max_speed_mps);
    const double travel = std::hypot(x1 - x0, y1 - y0) / speed;
    legs_.push_back({t0, t0 + travel, x0, y0, x1, y1});
    const double dwell = rng_.uniform(0.0, params_.max_dwell_s);
    legs_.push_back({t0 + travel, t0 + travel + dwell, x1, y1, x1, y1});
  }
}

GeoRecord RandomWaypoint::position(std::int64_t t) {
  for (auto it = pins_.rbegin(); it != pins_.rend(); ++it) {
    if (t >= it->from && t <= it->to) {
      GeoRecord r;
      r.lat = it->lat;
      r.lon = it->lon;
      r.timestamp = t;
      return r;
    }
  }
  const double tt = std::max<double>(0.0, static_cast<double>(t));
  extend_to(tt);
  auto leg = std::lower_bound(legs_.begin(), legs_.end(), tt,
                              [](const Leg& l, double v) { return l.t1 < v; });
  const double span = leg->t1 - leg->t0;
  const double f = span > 0 ? std::clamp((tt - leg->t0) / span, 0.0, 1.0) : 0.0;
  return to_geo(leg->x0 + f * (leg->x1 - leg->x0), leg->y0 + f * (leg->y1 - leg->y0), t);
}

void RandomWaypoint::pin(std::int64_t from, std::int64_t to, double lat, double lon) {
  pins_.push_back({from, to, lat, lon});
}

// ---------------------------------------------------------------------------
// User agent

UserAgent::UserAgent(const Seed& user_seed, const GeoPublicKey& ca_key, AgentConfig config,
                     Rng rng)
    : seed_(user_seed), ca_key_(ca_key), config_(std::move(config)), rng_(std::move(rng)) {}

const UserEpochKey& UserAgent::epoch_key(std::int64_t epoch) {
  auto it = keys_.find(epoch);
  if (it == keys_.end()) it = keys_.emplace(epoch, derive_epoch_key(seed_, epoch)).first;
  return it->second;
}

const EnvelopeSession& UserAgent::session(std::int64_t epoch) {
  auto key = std::make_pair(epoch, ca_key_.key_id);
  auto it = sessions_.find(key);
  if (it == sessions_.end()) {
    it = sessions_.emplace(key, EnvelopeSession(ca_key_, rng_.bytes<kSeedBytes>())).first;
  }
  return it->second;
}

GeoRecord UserAgent::generalize(const GeoRecord& raw) const {
  GeoRecord r = raw;
  const GeneralizationConfig& g = config_.geodata;
  if (g.datum_shift) r = datum_shift(r, config_.community_key);
  if (g.grid_m > 0) r = grid_snap(r, g.grid_m);
  if (g.perturb_m > 0) r = perturb(r, config_.community_key, g.perturb_m);
  return r;
}

void UserAgent::forget_before(std::int64_t t) {
  auto keep = std::find_if(history_.begin(), history_.end(),
                           [&](const OwnRecord& o) { return o.record.timestamp >= t; });
  history_.erase(history_.begin(), keep);
}

std::vector<Emission> UserAgent::observe(const GeoRecord& raw) {
  validate(raw);
  GeoRecord sample = generalize(raw);
  if (config_.suppression && last_upload_ &&
      haversine_distance(sample, *last_upload_) < config_.suppression_m &&
      static_cast<double>(sample.timestamp + config_.cadence_s - last_upload_->timestamp) <=
          config_.max_gap_s) {
    return {};
  }
  last_upload_ = sample;

  const std::int64_t epoch = epoch_of(sample.timestamp);
  const std::int64_t into_day = sample.timestamp - epoch * kSecondsPerDay;
  const std::uint64_t counter =
      static_cast<std::uint64_t>(into_day) * config_.pseudonyms_per_epoch / kSecondsPerDay;
  Bytes prefix = derive_pseudonym(epoch_key(epoch), counter, config_.width);
  SealedGeodata sealed = session(epoch).seal(sample, config_.width, rng_);
  counters_used_[epoch] = std::max(counters_used_[epoch], counter + 1);

  Emission e;
  e.tx.address = encode_tracecode(prefix, sealed.commitment, config_.width);
  e.tx.ciphertext = std::move(sealed.ciphertext);
  e.tx.timestamp = sample.timestamp;
  e.record = sample;
  e.key_id = ca_key_.key_id;
  history_.push_back({epoch, counter, prefix, sealed.commitment, sample});
  forget_before(sample.timestamp - config_.history_days * kSecondsPerDay);

  if (config_.upload_policy == UploadPolicy::kImmediate) return {std::move(e)};
  buffer_.push_back(std::move(e));
  return {};
}

std::vector<Emission> UserAgent::charge() {
  std::vector<Emission> out;
  out.swap(buffer_);
  return out;
}

Disclosure UserAgent::disclose(ByteView challenge, std::int64_t now, int share_days) const {
  if (!consent) throw Error(ErrorCode::kNoConsent, "patient withheld consent");
  Disclosure d;
  const std::int64_t from = now - static_cast<std::int64_t>(share_days) * kSecondsPerDay;
  std::set<std::pair<std::int64_t, std::uint64_t>> claimed;
  const std::uint64_t scan =
      std::max<std::uint64_t>(kOwnershipScanWindow, config_.pseudonyms_per_epoch);
  for (const OwnRecord& o : history_) {
    if (o.record.timestamp < from || o.record.timestamp > now) continue;
    if (claimed.insert({o.epoch, o.counter}).second) {
      d.claims.push_back(
          prove_ownership(derive_epoch_key(seed_, o.epoch), o.prefix, challenge, scan));
    }
    d.records.push_back({o.prefix, o.suffix, o.record});
  }
  return d;
}

std::vector<std::pair<std::int64_t, Bytes>> UserAgent::own_prefixes() const {
  std::vector<std::pair<std::int64_t, Bytes>> out;
  for (const auto& [epoch, count] : counters_used_) {
    UserEpochKey key = derive_epoch_key(seed_, epoch);
    for (std::uint64_t c = 0; c < count; ++c) {
      out.emplace_back(epoch, derive_pseudonym(key, c, config_.width));
    }
  }
  return out;
}

std::vector<std::pair<std::int64_t, Risk>> UserAgent::self_match(
    const NotificationLedger& ledger, std::int64_t since_epoch) const {
  std::unordered_map<Fingerprint, std::int64_t> mine;
  for (auto& [epoch, prefix] : own_prefixes()) {
    if (epoch >= since_epoch) mine.emplace(fingerprint(prefix), epoch);
  }
  std::map<std::int64_t, Risk> verdicts;
  for (const NotificationEntry& e : ledger.read_notifications(since_epoch)) {
    auto it = mine.find(e.fingerprint);
    if (it == mine.end() || it->second != e.epoch) continue;
    auto [v, inserted] = verdicts.try_emplace(e.epoch, e.risk);
    if (!inserted) v->second = std::max(v->second, e.risk);
  }
  return {verdicts.begin(), verdicts.end()};
}

Bytes symptom_prefix(std::string_view symptom_code, Width width) {
  detail::ensure_sodium();
  Bytes out(half_bytes(width));
  crypto_generichash(out.data(), out.size(),
                     reinterpret_cast<const unsigned char*>(symptom_code.data()),
                     symptom_code.size(), nullptr, 0);
  return out;
}

Emission UserAgent::seal_symptom(std::string_view symptom_code, const GeoRecord& raw) {
  validate(raw);
  GeoRecord sample = generalize(raw);
  SealedGeodata sealed = session(epoch_of(sample.timestamp)).seal(sample, config_.width, rng_);
  Emission e;
  e.tx.address =
      encode_tracecode(symptom_prefix(symptom_code, config_.width), sealed.commitment,
                       config_.width);
  e.tx.ciphertext = std::move(sealed.ciphertext);
  e.tx.timestamp = sample.timestamp;
  e.tx.untrusted = true;
  e.record = sample;
  e.key_id = ca_key_.key_id;
  return e;
}

std::vector<TracingTx> user_tick(UserAgent& agent, const GeoRecord& raw) {
  std::vector<TracingTx> out;
  for (Emission& e : agent.observe(raw)) out.push_back(std::move(e.tx));
  return out;
}

std::vector<std::pair<std::int64_t, Risk>> self_match(const UserAgent& agent,
                                                      const NotificationLedger& ledger,
                                                      std::int64_t since_epoch) {
  return agent.self_match(ledger, since_epoch);
}

TxId self_mark_symptoms(UserAgent& agent, std::string_view symptom_code, const GeoRecord& raw,
                        TracingLedger& ledger, Rng& rng) {
  Emission e = agent.seal_symptom(symptom_code, raw);
  e.tx.parents = ledger.select_tips(rng);
  return ledger.append_tracing(std::move(e.tx));
}

// ---------------------------------------------------------------------------
// Diagnostician

DiagnosticianAgent::DiagnosticianAgent(std::string id, const Seed& seed, Width width)
    : id_(std::move(id)), seed_(seed), width_(width), signing_(SigningKey::from_seed(seed)) {}

Bytes DiagnosticianAgent::issue_challenge(Rng& rng) const {
  auto c = rng.bytes<kChallengeBytes>();
  return Bytes(c.begin(), c.end());
}

std::size_t diagnose(DiagnosticianAgent& diag, const Disclosure& disclosure,
                     ByteView challenge, TracingLedger& ledger, const GeoPublicKey& ca_key,
                     std::int64_t now, Rng& rng) {
  std::set<Bytes> claimed;
  bool ok = true;
  for (const OwnershipProof& p : disclosure.claims) {
    if (!verify_ownership(p, challenge)) ok = false;
    claimed.insert(p.claimed_prefix);
  }
  for (const DisclosedRecord& r : disclosure.records) {
    if (!claimed.contains(r.prefix)) ok = false;
  }
  if (!ok) {
    diag.consent_log_.push_back({now, disclosure.claims.size(), 0, false});
    throw Error(ErrorCode::kOwnershipFailed, "pseudonym exchange did not verify");
  }

  std::unordered_map<std::string, const GeoRecord*> by_suffix;
  for (const DisclosedRecord& r : disclosure.records) {
    by_suffix.emplace(bytes_key(r.suffix), &r.record);
  }
  std::vector<std::pair<TxId, const GeoRecord*>> todo;
  for (const Bytes& prefix : claimed) {
    for (const auto& [id, tx] : ledger.lookup_by_prefix(prefix)) {
      if (tx.endorsed() || tx.untrusted) continue;
      auto it = by_suffix.find(bytes_key(tx.address.suffix()));
      if (it != by_suffix.end()) todo.emplace_back(id, it->second);
    }
  }
  std::sort(todo.begin(), todo.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  const std::int64_t epoch = epoch_of(now);
  const std::uint64_t counter = diag.cases_per_epoch_[epoch]++;
  diag.last_prefix_ =
      derive_pseudonym(derive_epoch_key(diag.seed_, epoch), counter, diag.width_);
  std::size_t appended = 0;
  // The records of one case already share a prefix; one ephemeral key for all
  // of them links nothing new.
  const EnvelopeSession session(ca_key, rng.bytes<kSeedBytes>());
  for (const auto& [id, record] : todo) {
    SealedGeodata sealed = session.seal(*record, diag.width_, rng);
    TracingTx tx;
    tx.address = encode_tracecode(diag.last_prefix_, sealed.commitment, diag.width_);
    tx.ciphertext = std::move(sealed.ciphertext);
    tx.timestamp = now;
    tx.endorsement = Endorsement{
        diag.id_, diag.signing_.sign(endorsement_message(tx.address, tx.ciphertext, now))};
    tx.parents = ledger.select_tips(rng);
    ledger.append_tracing(std::move(tx));
    ++appended;
  }
  diag.consent_log_.push_back({now, disclosure.claims.size(), appended, true});
  return appended;
}

namespace {

// Appends an emission at upload time `now` with tips from `rng`.
TxId upload(TracingLedger& ledger, Emission& e, std::int64_t now, Rng& rng) {
  e.tx.parents = ledger.select_tips(rng);
  e.tx.timestamp = now;
  return ledger.append_tracing(e.tx);
}

}  // namespace

std::size_t diagnose(DiagnosticianAgent& diag, UserAgent& patient, TracingLedger& ledger,
                     const GeoPublicKey& ca_key, int share_days, std::int64_t now, Rng& rng) {
  if (!patient.consent) throw Error(ErrorCode::kNoConsent, "patient withheld consent");
  for (Emission& e : patient.charge()) upload(ledger, e, now, rng);
  Bytes challenge = diag.issue_challenge(rng);
  Disclosure d = patient.disclose(challenge, now, share_days);
  std::size_t n = diagnose(diag, d, challenge, ledger, ca_key, now, rng);
  patient.isolated = true;
  return n;
}

// ---------------------------------------------------------------------------
// Scenario config

void Scenario::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfigError, m); };
  if (!trace_csv) {
    if (users < 1) fail("users must be >= 1");
    if (days < 1) fail("days must be >= 1");
  }
  if (active_start_h < 0 || active_end_h > 24 || active_start_h >= active_end_h) {
    fail("active_hours must satisfy 0 <= start < end <= 24");
  }
  if (cadence_s < 1) fail("cadence_s must be >= 1");
  if (charge_time_s < 0 || charge_time_s >= kSecondsPerDay) fail("charge_time_s out of range");
  if (pseudonyms_per_epoch < 1 || pseudonyms_per_epoch > kOwnershipScanWindow) {
    fail("pseudonyms_per_epoch must be in [1, 48]");
  }
  if (share_days < 1) fail("share_days must be >= 1");
  if (geo_keys < 1) fail("geo_keys must be >= 1");
  if (diagnosticians < 1) fail("diagnosticians must be >= 1");
  if (!(suppression_m >= 0)) fail("suppression radius must be >= 0");
  if (!(mobility.half_extent_m > 0) || !(mobility.min_speed_mps > 0) ||
      mobility.max_speed_mps < mobility.min_speed_mps || !(mobility.max_dwell_s >= 0)) {
    fail("bad mobility parameters");
  }
  if (!(geodata.grid_m >= 0) || !(geodata.perturb_m >= 0)) fail("bad geodata parameters");
  if (!(match.cell_m > 0) || match.bucket_s < 1 || match.workers < 1) fail("bad solver options");
  try {
    policy.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  for (const RegionRule& r : policy.region_rules) {
    if (std::none_of(regions.begin(), regions.end(),
                     [&](const Region& g) { return g.id == r.region_id; })) {
      fail("region rule names unknown region " + r.region_id);
    }
  }
  std::set<KeyId> revoked;
  for (const Revocation& r : revocations) {
    if (r.key_id < 1 || r.key_id > geo_keys) fail("revocation names unknown key");
    if (r.day < 0) fail("revocation day must be >= 0");
    revoked.insert(r.key_id);
  }
  if (revoked.size() >= geo_keys) fail("at least one geodata key must stay unrevoked");
  if (!trace_csv) {
    for (const CaseSpec& c : cases) {
      if (c.user >= users || c.day < 0 || c.day >= days) fail("case out of range");
      if (c.time_s < 0 || c.time_s >= kSecondsPerDay) fail("case time_s out of range");
    }
    for (const ForcedContact& f : forced_contacts) {
      if (f.patient >= users || f.contact >= users || f.patient == f.contact) {
        fail("forced contact names bad users");
      }
      if (f.day < 0 || f.day >= days || f.start_s < 0 || f.duration_s < 0) {
        fail("forced contact out of range");
      }
    }
    for (const SelfMark& m : self_marks) {
      if (m.user >= users || m.day < 0 || m.day >= days) fail("self mark out of range");
    }
  }
}

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw Error(ErrorCode::kConfigError, "unknown key " + where + "." + it.key());
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
    const json& v = j.at(key);
    if (!v.is_number_integer()) {
      throw Error(ErrorCode::kConfigError, std::string(key) + " must be an integer");
    }
    if (std::is_unsigned_v<T> && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
      throw Error(ErrorCode::kConfigError, std::string(key) + " must be non-negative");
    }
  }
  out = j.at(key).get<T>();
}

Risk parse_risk(const json& j) {
  try {
    return risk_from_string(j.get<std::string>());
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  }
}

}  // namespace

Scenario parse_scenario(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("malformed scenario JSON: ") + e.what());
  }
  Scenario s;
  try {
    check_keys(j,
               {"users", "days", "seed", "cases", "daily_cases", "forced_contacts", "policy",
                "regions", "geodata", "mobility", "active_hours", "upload_policy",
                "charge_time_s", "cadence_s", "address_width", "pseudonyms_per_epoch", "share_days",
                "suppression", "geo_keys", "revocations", "self_marks", "diagnosticians",
                "prune", "solver", "trace_csv", "description"},
               "scenario");
    read(j, "users", s.users);
    read(j, "days", s.days);
    read(j, "seed", s.seed);
    read(j, "daily_cases", s.daily_cases);
    read(j, "charge_time_s", s.charge_time_s);
    read(j, "cadence_s", s.cadence_s);
    read(j, "pseudonyms_per_epoch", s.pseudonyms_per_epoch);
    read(j, "share_days", s.share_days);
    read(j, "geo_keys", s.geo_keys);
    read(j, "diagnosticians", s.diagnosticians);
    read(j, "prune", s.prune);
    if (j.contains("cases")) {
      for (const json& c : j.at("cases")) {
        check_keys(c, {"day", "user", "time_s"}, "cases[]");
        CaseSpec cs;
        cs.day = c.at("day").get<int>();
        cs.user = c.at("user").get<std::size_t>();
        read(c, "time_s", cs.time_s);
        s.cases.push_back(cs);
      }
    }
    if (j.contains("forced_contacts")) {
      for (const json& c : j.at("forced_contacts")) {
        check_keys(c, {"patient", "contact", "day", "start_s", "duration_s", "offset_m"},
                   "forced_contacts[]");
        ForcedContact f;
        f.patient = c.at("patient").get<std::size_t>();
        f.contact = c.at("contact").get<std::size_t>();
        f.day = c.at("day").get<int>();
        read(c, "start_s", f.start_s);
        read(c, "duration_s", f.duration_s);
        read(c, "offset_m", f.offset_m);
        s.forced_contacts.push_back(f);
      }
    }
    if (j.contains("policy")) {
      const json& p = j.at("policy");
      check_keys(p,
                 {"high_radius_m", "high_duration_min", "low_radius_m", "window_days",
                  "region_rules", "region_slack_s", "include_self_marked", "max_gap_s"},
                 "policy");
      read(p, "high_radius_m", s.policy.high_radius_m);
      read(p, "high_duration_min", s.policy.high_duration_min);
      read(p, "low_radius_m", s.policy.low_radius_m);
      read(p, "window_days", s.policy.window_days);
      read(p, "region_slack_s", s.policy.region_slack_s);
      read(p, "include_self_marked", s.policy.include_self_marked);
      read(p, "max_gap_s", s.policy.max_gap_s);
      if (p.contains("region_rules")) {
        for (const json& r : p.at("region_rules")) {
          check_keys(r, {"region", "risk"}, "policy.region_rules[]");
          RegionRule rule;
          rule.region_id = r.at("region").get<std::string>();
          if (r.contains("risk")) rule.blanket_risk = parse_risk(r.at("risk"));
          s.policy.region_rules.push_back(rule);
        }
      }
    }
    if (j.contains("regions")) {
      for (const json& r : j.at("regions")) {
        check_keys(r, {"id", "polygon"}, "regions[]");
        Region region;
        region.id = r.at("id").get<std::string>();
        for (const json& v : r.at("polygon")) {
          region.polygon.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
        }
        if (region.polygon.size() < 3) {
          throw Error(ErrorCode::kConfigError, "region " + region.id + " needs 3 vertices");
        }
        s.regions.push_back(std::move(region));
      }
    }
    if (j.contains("geodata")) {
      const json& g = j.at("geodata");
      check_keys(g, {"grid_m", "perturb_m", "datum_shift"}, "geodata");
      read(g, "grid_m", s.geodata.grid_m);
      read(g, "perturb_m", s.geodata.perturb_m);
      read(g, "datum_shift", s.geodata.datum_shift);
    }
    if (j.contains("mobility")) {
      const json& m = j.at("mobility");
      check_keys(m,
                 {"center_lat", "center_lon", "half_extent_m", "min_speed_mps",
                  "max_speed_mps", "max_dwell_s"},
                 "mobility");
      read(m, "center_lat", s.mobility.center_lat);
      read(m, "center_lon", s.mobility.center_lon);
      read(m, "half_extent_m", s.mobility.half_extent_m);
      read(m, "min_speed_mps", s.mobility.min_speed_mps);
      read(m, "max_speed_mps", s.mobility.max_speed_mps);
      read(m, "max_dwell_s", s.mobility.max_dwell_s);
    }
    if (j.contains("active_hours")) {
      const json& a = j.at("active_hours");
      if (!a.is_array() || a.size() != 2) {
        throw Error(ErrorCode::kConfigError, "active_hours must be [start, end]");
      }
      s.active_start_h = a.at(0).get<int>();
      s.active_end_h = a.at(1).get<int>();
    }
    if (j.contains("upload_policy")) {
      std::string u = j.at("upload_policy").get<std::string>();
      if (u == "immediate") {
        s.upload_policy = UploadPolicy::kImmediate;
      } else if (u == "batched") {
        s.upload_policy = UploadPolicy::kBatchedOnCharge;
      } else {
        throw Error(ErrorCode::kConfigError, "upload_policy must be immediate or batched");
      }
    }
    if (j.contains("address_width")) {
      int w = j.at("address_width").get<int>();
      if (w != 32 && w != 64) throw Error(ErrorCode::kConfigError, "address_width is 32 or 64");
      s.address_width = static_cast<Width>(w);
    }
    if (j.contains("suppression")) {
      const json& sp = j.at("suppression");
      check_keys(sp, {"enabled", "radius_m"}, "suppression");
      read(sp, "enabled", s.suppression);
      read(sp, "radius_m", s.suppression_m);
    }
    if (j.contains("revocations")) {
      for (const json& r : j.at("revocations")) {
        check_keys(r, {"key_id", "day"}, "revocations[]");
        s.revocations.push_back({r.at("key_id").get<KeyId>(), r.at("day").get<int>()});
      }
    }
    if (j.contains("self_marks")) {
      for (const json& m : j.at("self_marks")) {
        check_keys(m, {"user", "day", "time_s", "code"}, "self_marks[]");
        SelfMark sm;
        sm.user = m.at("user").get<std::size_t>();
        sm.day = m.at("day").get<int>();
        read(m, "time_s", sm.time_s);
        sm.code = m.at("code").get<std::string>();
        s.self_marks.push_back(std::move(sm));
      }
    }
    if (j.contains("solver")) {
      const json& sv = j.at("solver");
      check_keys(sv, {"mode", "workers", "cell_m", "bucket_s"}, "solver");
      if (sv.contains("mode")) {
        std::string m = sv.at("mode").get<std::string>();
        if (m == "hash") {
          s.match.mode = MatchMode::kSpatialHash;
        } else if (m == "brute") {
          s.match.mode = MatchMode::kBruteForce;
        } else {
          throw Error(ErrorCode::kConfigError, "solver.mode must be hash or brute");
        }
      }
      read(sv, "workers", s.match.workers);
      read(sv, "cell_m", s.match.cell_m);
      read(sv, "bucket_s", s.match.bucket_s);
    }
    if (j.contains("trace_csv")) s.trace_csv = j.at("trace_csv").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("bad scenario field: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Scenario s = parse_scenario(ss.str());
  if (s.trace_csv && s.trace_csv->is_relative()) s.trace_csv = path.parent_path() / *s.trace_csv;
  return s;
}

// ---------------------------------------------------------------------------
// Oracle

ExposureMap plaintext_oracle(const GroundTruth& truth, const RiskPolicy& policy) {
  policy.validate();
  // A revocation at the start of a day lands after the previous night's run,
  // which shares its timestamp.
  auto hidden = [&](KeyId key, std::int64_t now) {
    auto it = truth.revoked_at.find(key);
    return it != truth.revoked_at.end() && it->second < now;
  };
  auto sort_unique = [](std::vector<GeoRecord>& recs) {
    std::stable_sort(recs.begin(), recs.end(), [](const GeoRecord& a, const GeoRecord& b) {
      return a.timestamp < b.timestamp;
    });
    recs.erase(std::unique(recs.begin(), recs.end(),
                           [](const GeoRecord& a, const GeoRecord& b) {
                             return a.timestamp == b.timestamp;
                           }),
               recs.end());
  };
  const double high_s = policy.high_duration_min * 60.0;
  auto classify = [&](const std::vector<GeoRecord>& patient,
                      const std::vector<GeoRecord>& contact) -> std::optional<Risk> {
    for (const ContactEvent& e :
         colocation(patient, contact, policy.high_radius_m, policy.max_gap_s)) {
      if (e.duration() >= high_s) return Risk::kHigh;
    }
    if (!colocation(patient, contact, policy.low_radius_m, policy.max_gap_s).empty()) {
      return Risk::kLow;
    }
    return std::nullopt;
  };
  // Consecutive runs mostly see the same (case, trace) pairs; a pair is fully
  // described by the case, the prefix and the extent of both record slices.
  using PairKey = std::tuple<std::size_t, Bytes, std::size_t, std::int64_t, std::size_t>;
  std::map<PairKey, std::optional<Risk>> memo;

  ExposureMap out;
  for (std::int64_t now : truth.solver_times) {
    const TimeRange window{now - static_cast<std::int64_t>(policy.window_days) * kSecondsPerDay,
                           now};
    std::map<Bytes, std::pair<std::size_t, std::vector<GeoRecord>>> contacts;
    for (const GroundTruth::Upload& u : truth.uploads) {
      if (u.untrusted || u.uploaded_at > now || hidden(u.key_id, now)) continue;
      if (!window.contains(u.record.timestamp)) continue;
      auto& slot = contacts[u.prefix];
      slot.first = u.user;
      slot.second.push_back(u.record);
    }
    for (auto& [prefix, slot] : contacts) sort_unique(slot.second);
    for (const GroundTruth::Case& c : truth.cases) {
      if (c.time > now || hidden(c.key_id, now)) continue;
      std::vector<GeoRecord> patient;
      for (const GeoRecord& r : c.records) {
        if (window.contains(r.timestamp)) patient.push_back(r);
      }
      if (patient.empty()) continue;
      sort_unique(patient);
      const std::size_t ci = static_cast<std::size_t>(&c - truth.cases.data());
      for (auto& [prefix, slot] : contacts) {
        const auto& trace = slot.second;
        // Only patient samples within max_gap of the trace can share a piece
        // with it.
        const double gap = policy.max_gap_s;
        auto first = std::lower_bound(
            patient.begin(), patient.end(), static_cast<double>(trace.front().timestamp) - gap,
            [](const GeoRecord& r, double v) { return static_cast<double>(r.timestamp) < v; });
        auto last = std::upper_bound(
            first, patient.end(), static_cast<double>(trace.back().timestamp) + gap,
            [](double v, const GeoRecord& r) { return v < static_cast<double>(r.timestamp); });
        if (first == last) continue;
        PairKey key{ci, prefix, trace.size(), first->timestamp,
                    static_cast<std::size_t>(last - first)};
        auto hit = memo.find(key);
        if (hit == memo.end()) {
          hit = memo.emplace(std::move(key),
                             classify(std::vector<GeoRecord>(first, last), trace)).first;
        }
        const std::optional<Risk> risk = hit->second;
        const std::int64_t epoch = epoch_of(trace.front().timestamp);
        if (!risk) continue;
        auto [it, inserted] = out.try_emplace({slot.first, epoch}, *risk);
        if (!inserted) it->second = std::max(it->second, *risk);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

namespace {

LatencySummary summarize(std::vector<double> v) {
  LatencySummary s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    std::size_t i = static_cast<std::size_t>(std::ceil(p * v.size()));
    return v[std::clamp<std::size_t>(i, 1, v.size()) - 1];
  };
  s.min_s = v.front();
  s.max_s = v.back();
  s.p50_s = q(0.5);
  s.p90_s = q(0.9);
  double sum = 0;
  for (double x : v) sum += x;
  s.mean_s = sum / v.size();
  return s;
}

json metrics_json(const LedgerMetrics& m) {
  return {{"tx_count", m.tx_count},
          {"bytes_stored", m.bytes_stored},
          {"address_bytes", m.address_bytes},
          {"observed_tps", m.observed_tps},
          {"pruned_count", m.pruned_count}};
}

}  // namespace

std::string ScenarioReport::to_json() const {
  json runs = json::array();
  for (const SolverReport& r : solver_runs) {
    runs.push_back({{"window_start", r.window.start},
                    {"window_end", r.window.end},
                    {"patients", r.patients},
                    {"records_scanned", r.records_scanned},
                    {"high_count", r.high_count},
                    {"low_count", r.low_count},
                    {"skipped_revoked", r.skipped_revoked},
                    {"published", r.published}});
  }
  json j = {
      {"users", users},
      {"days", days},
      {"seed", seed},
      {"diagnoses", diagnoses},
      {"endorsed_txs", endorsed_txs},
      {"ownership_failures", ownership_failures},
      {"self_marks", self_marks},
      {"tracing_appended", tracing_appended},
      {"ledger", metrics_json(ledger)},
      {"notifications", notifications},
      {"solver_runs", runs},
      {"notification_latency_s",
       {{"count", latency.count},
        {"min", latency.min_s},
        {"p50", latency.p50_s},
        {"p90", latency.p90_s},
        {"max", latency.max_s},
        {"mean", latency.mean_s}}},
      {"exposure",
       {{"pipeline_high", pipeline_high},
        {"pipeline_low", pipeline_low},
        {"oracle_high", oracle_high},
        {"oracle_low", oracle_low},
        {"high_confusion",
         {{"tp", high_confusion.tp},
          {"fp", high_confusion.fp},
          {"fn", high_confusion.fn},
          {"tn", high_confusion.tn},
          {"precision", high_confusion.precision()},
          {"recall", high_confusion.recall()}}}}},
  };
  return j.dump(2) + "\n";
}

std::string ScenarioReport::timing_json() const {
  json runs = json::array();
  for (const SolverReport& r : solver_runs) runs.push_back(r.wall_time_ms);
  json j = {{"total_wall_ms", total_wall_ms},
            {"solver_wall_ms", solver_wall_ms},
            {"solver_runs_ms", runs}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Runner

namespace {

enum class EventKind : int {
  kRevoke = 0,
  kMetrics = 1,
  kSample = 2,
  kSelfMark = 3,
  kCharge = 4,
  kDiagnose = 5,
};

struct Event {
  std::int64_t t;
  EventKind kind;
  std::size_t a;
  std::size_t b;

  bool operator<(const Event& o) const {
    return std::tie(t, kind, a, b) < std::tie(o.t, o.kind, o.a, o.b);
  }
};

std::uint64_t stream(std::uint64_t kind, std::uint64_t index) { return kind << 40 | index; }

std::string format_user_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "user-%06zu", i);
  return buf;
}

}  // namespace

ScenarioAuthorities derive_authorities(const Scenario& s) {
  Rng key_rng = Rng(s.seed).fork(stream(2, 0));
  ScenarioAuthorities a;
  for (std::size_t k = 1; k <= s.geo_keys; ++k) {
    a.geo_keys.push_back(
        GeoEnvelopeKey::generate(static_cast<KeyId>(k), key_rng.bytes<kSeedBytes>()));
  }
  a.solver = {"solver-0", SigningKey::from_seed(key_rng.bytes<kSeedBytes>())};
  for (std::size_t i = 0; i < s.diagnosticians; ++i) {
    a.diagnosticians.emplace_back("diag-" + std::to_string(i), key_rng.bytes<kSeedBytes>());
  }
  auto ck = key_rng.bytes<32>();
  a.community_key.assign(ck.begin(), ck.end());
  return a;
}

ScenarioResult run_scenario(const Scenario& input) {
  const auto started = std::chrono::steady_clock::now();
  Scenario s = input;
  s.validate();

  std::map<std::string, std::vector<GeoRecord>> replay;
  if (s.trace_csv) {
    std::ifstream in(*s.trace_csv);
    if (!in) throw Error(ErrorCode::kConfigError, "cannot read " + s.trace_csv->string());
    replay = read_trace_csv(in);
    if (replay.empty()) throw Error(ErrorCode::kConfigError, "trace csv has no records");
    s.users = replay.size();
    std::int64_t last = 0;
    for (auto& [id, trace] : replay) {
      if (trace.front().timestamp < 0) {
        throw Error(ErrorCode::kConfigError, "trace timestamps must be >= 0");
      }
      last = std::max(last, trace.back().timestamp);
    }
    s.days = static_cast<int>(last / kSecondsPerDay) + 1;
    s.validate();
  }
  std::vector<const std::vector<GeoRecord>*> replay_traces;
  for (auto& [id, trace] : replay) replay_traces.push_back(&trace);

  Rng master(s.seed);
  Rng sched = master.fork(stream(1, 0));

  ScenarioResult result;
  result.tracing = std::make_unique<TracingLedger>();
  result.notifications = std::make_unique<NotificationLedger>();
  result.keys = std::make_unique<KeyRegistry>();
  TracingLedger& tracing = *result.tracing;
  NotificationLedger& notifications = *result.notifications;
  KeyRegistry& keys = *result.keys;
  GroundTruth& truth = result.truth;

  ScenarioAuthorities auth = derive_authorities(s);
  for (const GeoEnvelopeKey& k : auth.geo_keys) keys.add(k);
  auto live_keys = [&] {
    std::vector<KeyId> ids;
    for (KeyId id : keys.ids()) {
      if (!keys.is_revoked(id)) ids.push_back(id);
    }
    return ids;
  };

  const SolverIdentity& solver = auth.solver;
  notifications.authorize_solver(solver.solver_id, solver.key.public_key);
  std::vector<DiagnosticianAgent> diags;
  for (const auto& [id, seed] : auth.diagnosticians) {
    diags.emplace_back(id, seed, s.address_width);
    tracing.authorize_diagnostician(diags.back().id(), diags.back().public_key());
  }

  AgentConfig cfg;
  cfg.width = s.address_width;
  cfg.upload_policy = s.upload_policy;
  cfg.pseudonyms_per_epoch = s.pseudonyms_per_epoch;
  cfg.geodata = s.geodata;
  cfg.community_key = auth.community_key;
  cfg.suppression = s.suppression;
  cfg.suppression_m = s.suppression_m;
  cfg.max_gap_s = s.policy.max_gap_s;
  cfg.history_days = s.share_days + 1;
  cfg.cadence_s = s.cadence_s;

  std::vector<UserAgent> users;
  std::vector<RandomWaypoint> walks;
  std::vector<std::int64_t> phase;
  {
    std::vector<KeyId> ids = live_keys();
    for (std::size_t u = 0; u < s.users; ++u) {
      Seed seed = master.fork(stream(3, u)).bytes<kSeedBytes>();
      result.user_seeds.push_back(seed);
      result.user_ids.push_back(format_user_id(u));
      users.emplace_back(seed, keys.public_key(ids[u % ids.size()]), cfg,
                         master.fork(stream(4, u)));
      walks.emplace_back(s.mobility, master.fork(stream(5, u)));
      phase.push_back(static_cast<std::int64_t>(sched.below(cfg.cadence_s)));
    }
  }

  for (const ForcedContact& f : s.forced_contacts) {
    const std::int64_t t0 = f.day * kSecondsPerDay + f.start_s;
    const std::int64_t t1 = t0 + f.duration_s;
    GeoRecord p = walks[f.patient].position(t0);
    walks[f.patient].pin(t0, t1, p.lat, p.lon);
    const double dlon = f.offset_m / (kMetersPerDegree * std::cos(p.lat * std::numbers::pi / 180.0));
    walks[f.contact].pin(t0, t1, p.lat, p.lon + dlon);
  }

  std::vector<CaseSpec> cases = s.cases;
  std::set<std::size_t> scheduled_patients;
  for (const CaseSpec& c : cases) scheduled_patients.insert(c.user);

  ScenarioReport& report = result.report;
  report.users = s.users;
  report.days = s.days;
  report.seed = s.seed;

  auto append_emission = [&](std::size_t user, Emission& e, std::int64_t now) {
    upload(tracing, e, now, sched);
    ++report.tracing_appended;
    ByteView p = e.tx.address.prefix();
    truth.uploads.push_back(
        {user, Bytes(p.begin(), p.end()), e.record, now, e.key_id, e.tx.untrusted});
  };

  std::map<std::pair<std::int64_t, Fingerprint>, Risk> notified;
  std::vector<double> latencies;
  DecryptCache cache;
  MatchCache match_cache;
  MatchOptions match = s.match;
  match.cache = &match_cache;

  auto record_metrics = [&](std::int64_t t) {
    result.metrics.push_back({t, tracing.metrics(t)});
  };

  for (int day = 0; day < s.days; ++day) {
    const std::int64_t base = day * kSecondsPerDay;
    std::vector<Event> events;
    for (const Revocation& r : s.revocations) {
      if (r.day == day) events.push_back({base, EventKind::kRevoke, r.key_id, 0});
    }
    for (int h = 0; h < 24; ++h) events.push_back({base + h * 3600, EventKind::kMetrics, 0, 0});
    if (s.trace_csv) {
      for (std::size_t u = 0; u < replay_traces.size(); ++u) {
        const auto& trace = *replay_traces[u];
        for (std::size_t i = 0; i < trace.size(); ++i) {
          if (epoch_of(trace[i].timestamp) == day) {
            events.push_back({trace[i].timestamp, EventKind::kSample, u, i});
          }
        }
      }
    } else {
      const std::int64_t from = base + s.active_start_h * 3600;
      const std::int64_t to = base + s.active_end_h * 3600;
      for (std::size_t u = 0; u < s.users; ++u) {
        for (std::int64_t t = from + phase[u]; t < to; t += cfg.cadence_s) {
          events.push_back({t, EventKind::kSample, u, 0});
        }
      }
    }
    if (s.upload_policy == UploadPolicy::kBatchedOnCharge) {
      for (std::size_t u = 0; u < s.users; ++u) {
        events.push_back({base + s.charge_time_s, EventKind::kCharge, u, 0});
      }
    }
    for (std::size_t i = 0; i < s.self_marks.size(); ++i) {
      if (s.self_marks[i].day == day) {
        events.push_back({base + s.self_marks[i].time_s, EventKind::kSelfMark, i, 0});
      }
    }
    // Random daily cases among users not yet scheduled.
    for (std::size_t k = 0; k < s.daily_cases; ++k) {
      std::vector<std::size_t> pool;
      for (std::size_t u = 0; u < s.users; ++u) {
        if (!scheduled_patients.contains(u)) pool.push_back(u);
      }
      if (pool.empty()) break;
      std::size_t u = pool[sched.below(pool.size())];
      scheduled_patients.insert(u);
      const std::int64_t span = (s.active_end_h - s.active_start_h) * 3600;
      cases.push_back({day, u,
                       s.active_start_h * 3600 +
                           static_cast<std::int64_t>(sched.below(static_cast<std::uint64_t>(span)))});
    }
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (cases[i].day == day) {
        events.push_back({base + cases[i].time_s, EventKind::kDiagnose, i, 0});
      }
    }
    std::sort(events.begin(), events.end());

    for (const Event& ev : events) {
      switch (ev.kind) {
        case EventKind::kRevoke: {
          const KeyId id = static_cast<KeyId>(ev.a);
          if (!keys.is_revoked(id)) {
            keys.revoke(id);
            truth.revoked_at[id] = ev.t;
            std::vector<KeyId> ids = live_keys();
            for (std::size_t u = 0; u < users.size(); ++u) {
              users[u].set_ca_key(keys.public_key(ids[u % ids.size()]));
            }
          }
          break;
        }
        case EventKind::kMetrics:
          record_metrics(ev.t);
          break;
        case EventKind::kSample: {
          UserAgent& agent = users[ev.a];
          if (agent.isolated) break;
          GeoRecord raw = s.trace_csv ? (*replay_traces[ev.a])[ev.b] : walks[ev.a].position(ev.t);
          for (Emission& e : agent.observe(raw)) append_emission(ev.a, e, ev.t);
          break;
        }
        case EventKind::kCharge: {
          UserAgent& agent = users[ev.a];
          for (Emission& e : agent.charge()) append_emission(ev.a, e, ev.t);
          break;
        }
        case EventKind::kSelfMark: {
          const SelfMark& m = s.self_marks[ev.a];
          UserAgent& agent = users[m.user];
          GeoRecord raw = s.trace_csv ? replay_traces[m.user]->front() : walks[m.user].position(ev.t);
          raw.timestamp = ev.t;
          Emission e = agent.seal_symptom(m.code, raw);
          append_emission(m.user, e, ev.t);
          ++report.self_marks;
          break;
        }
        case EventKind::kDiagnose: {
          const std::size_t u = cases[ev.a].user;
          UserAgent& patient = users[u];
          if (patient.isolated) break;
          for (Emission& e : patient.charge()) append_emission(u, e, ev.t);
          DiagnosticianAgent& diag = diags[ev.a % diags.size()];
          const KeyId ca_id = live_keys().front();
          Bytes challenge = diag.issue_challenge(sched);
          try {
            Disclosure d = patient.disclose(challenge, ev.t, s.share_days);
            GroundTruth::Case c;
            c.user = u;
            c.time = ev.t;
            c.key_id = ca_id;
            std::size_t n =
                diagnose(diag, d, challenge, tracing, keys.public_key(ca_id), ev.t, sched);
            c.new_prefix = diag.last_prefix();
            for (const DisclosedRecord& r : d.records) {
              if (std::find(c.original_prefixes.begin(), c.original_prefixes.end(), r.prefix) ==
                  c.original_prefixes.end()) {
                c.original_prefixes.push_back(r.prefix);
              }
            }
            for (const DisclosedRecord& r : d.records) c.records.push_back(r.record);
            truth.cases.push_back(std::move(c));
            ++report.diagnoses;
            report.endorsed_txs += n;
            report.tracing_appended += n;
          } catch (const Error& e) {
            if (e.code() == ErrorCode::kOwnershipFailed) {
              ++report.ownership_failures;
            } else if (e.code() != ErrorCode::kNoConsent) {
              throw;
            }
          }
          patient.isolated = true;
          break;
        }
      }
    }

    // End of day: solve, then prune.
    const std::int64_t now = base + kSecondsPerDay;
    truth.solver_times.push_back(now);
    SolveOutcome outcome = run_solver(tracing, notifications, keys, solver, s.policy, now,
                                      s.regions, match, &cache);
    for (const RiskEndorsement& e : outcome.endorsements) {
      auto [it, inserted] = notified.try_emplace({e.epoch, e.fingerprint}, e.risk);
      if (inserted || (it->second == Risk::kLow && e.risk == Risk::kHigh)) {
        it->second = e.risk;
        latencies.push_back(static_cast<double>(now) - e.first_contact);
      }
    }
    report.solver_wall_ms += outcome.report.wall_time_ms;
    report.solver_runs.push_back(outcome.report);
    if (s.prune) tracing.prune(static_cast<std::int64_t>(s.policy.window_days) * kSecondsPerDay, now);
  }
  record_metrics(static_cast<std::int64_t>(s.days) * kSecondsPerDay);

  result.exposures.resize(users.size());
  std::set<std::pair<std::size_t, std::int64_t>> universe;
  for (const GroundTruth::Upload& u : truth.uploads) {
    if (!u.untrusted) universe.insert({u.user, epoch_of(u.record.timestamp)});
  }
  for (std::size_t u = 0; u < users.size(); ++u) {
    result.exposures[u] = users[u].self_match(notifications, 0);
    for (auto [epoch, risk] : result.exposures[u]) result.pipeline[{u, epoch}] = risk;
  }
  result.oracle = plaintext_oracle(truth, s.policy);

  auto count = [](const ExposureMap& m, Risk r) {
    return static_cast<std::size_t>(
        std::count_if(m.begin(), m.end(), [&](const auto& kv) { return kv.second == r; }));
  };
  report.pipeline_high = count(result.pipeline, Risk::kHigh);
  report.pipeline_low = count(result.pipeline, Risk::kLow);
  report.oracle_high = count(result.oracle, Risk::kHigh);
  report.oracle_low = count(result.oracle, Risk::kLow);
  auto is_high = [](const ExposureMap& m, const std::pair<std::size_t, std::int64_t>& k) {
    auto it = m.find(k);
    return it != m.end() && it->second == Risk::kHigh;
  };
  for (const auto& kv : result.pipeline) universe.insert(kv.first);
  for (const auto& kv : result.oracle) universe.insert(kv.first);
  for (const auto& k : universe) {
    const bool p = is_high(result.pipeline, k), o = is_high(result.oracle, k);
    if (p && o) {
      ++report.high_confusion.tp;
    } else if (p) {
      ++report.high_confusion.fp;
    } else if (o) {
      ++report.high_confusion.fn;
    } else {
      ++report.high_confusion.tn;
    }
  }

  report.ledger = tracing.metrics(static_cast<std::int64_t>(s.days) * kSecondsPerDay);
  report.notifications = notifications.size();
  report.latency = summarize(std::move(latencies));
  report.total_wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - started)
                             .count();
  return result;
}

void write_scenario_outputs(const ScenarioResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("report.json");
    out << result.report.to_json();
  }
  {
    auto out = open("timing.json");
    out << result.report.timing_json();
  }
  {
    auto out = open("tracing.jsonl");
    result.tracing->write_jsonl(out);
  }
  {
    auto out = open("notification.jsonl");
    result.notifications->write_jsonl(out);
  }
  {
    auto out = open("keys.json");
    out << result.keys->snapshot_json() << "\n";
  }
  {
    auto out = open("metrics.csv");
    out << "timestamp,tx_count,bytes_stored,address_bytes,observed_tps,pruned_count\n";
    char buf[64];
    for (const MetricsSample& m : result.metrics) {
      std::snprintf(buf, sizeof buf, "%.10g", m.metrics.observed_tps);
      out << m.timestamp << ',' << m.metrics.tx_count << ',' << m.metrics.bytes_stored << ','
          << m.metrics.address_bytes << ',' << buf << ',' << m.metrics.pruned_count << '\n';
    }
    if (!out) throw Error(ErrorCode::kIoError, "write failed");
  }
}

}  // namespace beeptrace
