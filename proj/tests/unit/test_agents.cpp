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
#include <sstream>

#include "beeptrace/agents.hpp"
#include "beeptrace/error.hpp"
#include "doctest.h"
#include "support/oracle.hpp"

using namespace beeptrace;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIoError;
}

Seed seed_of(std::uint64_t n) { return Rng(n).bytes<kSeedBytes>(); }

GeoRecord at(double lat, double lon, std::int64_t t) {
  GeoRecord r;
  r.lat = lat;
  r.lon = lon;
  r.timestamp = t;
  return r;
}

struct Authority {
  KeyRegistry keys;
  GeoEnvelopeKey ca = GeoEnvelopeKey::generate(1, seed_of(50));
  TracingLedger tracing;
  NotificationLedger notifications;
  DiagnosticianAgent diag{"diag-0", seed_of(51), Width::kW64};
  SolverIdentity solver{"solver-0", SigningKey::from_seed(seed_of(52))};
  Rng rng{53};

  Authority() {
    keys.add(ca);
    tracing.authorize_diagnostician(diag.id(), diag.public_key());
    notifications.authorize_solver(solver.solver_id, solver.key.public_key);
  }

  UserAgent user(std::uint64_t n, AgentConfig cfg = {}) {
    return UserAgent(seed_of(n), ca.public_key(), cfg, Rng(n));
  }

  void upload(const std::vector<TracingTx>& txs) {
    for (TracingTx tx : txs) {
      tx.parents = tracing.select_tips(rng);
      tracing.append_tracing(std::move(tx));
    }
  }
};

// Samples every cadence_s within [8h, 22h) of each day.
std::vector<GeoRecord> day_samples(int day, std::int64_t cadence_s, double lat, double lon) {
  std::vector<GeoRecord> out;
  for (std::int64_t t = 8 * 3600; t < 22 * 3600; t += cadence_s) {
    out.push_back(at(lat, lon, day * kSecondsPerDay + t));
  }
  return out;
}

std::set<std::pair<std::size_t, std::int64_t>> highs(const ExposureMap& m) {
  std::set<std::pair<std::size_t, std::int64_t>> s;
  for (const auto& [k, r] : m) {
    if (r == Risk::kHigh) s.insert(k);
  }
  return s;
}

std::string jsonl(const TracingLedger& l) {
  std::ostringstream out;
  l.write_jsonl(out);
  return out.str();
}

std::string jsonl(const NotificationLedger& l) {
  std::ostringstream out;
  l.write_jsonl(out);
  return out.str();
}

}  // namespace

TEST_CASE("fourteen active hours give 28 registrations a day") {
  Authority a;
  UserAgent u = a.user(1);
  std::size_t emitted = 0;
  std::set<Bytes> suffixes;
  for (const GeoRecord& r : day_samples(0, 1800, 55.87, -4.28)) {
    auto txs = user_tick(u, r);
    emitted += txs.size();
    for (const auto& tx : txs) suffixes.insert(Bytes(tx.address.suffix().begin(), tx.address.suffix().end()));
  }
  CHECK(emitted == 28);
  CHECK(suffixes.size() == 28);
  CHECK(u.own_prefixes().size() == 1);
}

TEST_CASE("a stationary user with suppression uploads less") {
  Authority a;
  AgentConfig cfg;
  cfg.suppression = true;
  UserAgent u = a.user(2, cfg);
  std::size_t emitted = 0;
  for (const GeoRecord& r : day_samples(0, 1800, 55.87, -4.28)) emitted += user_tick(u, r).size();
  CHECK(emitted < 28);
  CHECK(emitted >= 1);
  // Moving users are not suppressed.
  UserAgent v = a.user(3, cfg);
  emitted = 0;
  double lat = 55.87;
  for (GeoRecord r : day_samples(0, 1800, lat, -4.28)) {
    r.lat = (lat += 0.001);
    emitted += user_tick(v, r).size();
  }
  CHECK(emitted == 28);
}

TEST_CASE("batched upload holds everything until charging") {
  Authority a;
  AgentConfig cfg;
  cfg.upload_policy = UploadPolicy::kBatchedOnCharge;
  UserAgent u = a.user(4, cfg);
  for (const GeoRecord& r : day_samples(0, 1800, 55.87, -4.28)) CHECK(u.observe(r).empty());
  CHECK(u.pending() == 28);
  CHECK(u.charge().size() == 28);
  CHECK(u.pending() == 0);
  CHECK(u.charge().empty());
}

TEST_CASE("diagnosis re-couples a full window of records") {
  Authority a;
  AgentConfig cfg;
  cfg.cadence_s = 120;
  UserAgent patient = a.user(5, cfg);
  std::set<Bytes> original;
  for (int day = 0; day < 14; ++day) {
    for (const GeoRecord& r : day_samples(day, 120, 55.87, -4.28)) {
      auto txs = user_tick(patient, r);
      for (const auto& tx : txs) original.insert(Bytes(tx.address.prefix().begin(), tx.address.prefix().end()));
      a.upload(txs);
    }
  }
  REQUIRE(a.tracing.size() == 5880);
  const std::size_t n =
      diagnose(a.diag, patient, a.tracing, a.ca.public_key(), 14, 14 * kSecondsPerDay, a.rng);
  CHECK(n == 5880);
  CHECK(patient.isolated);
  CHECK(a.tracing.size() == 2 * 5880);
  std::size_t endorsed = 0;
  for (const auto& [id, tx] : a.tracing.snapshot()) {
    if (!tx.endorsed()) continue;
    ++endorsed;
    CHECK(a.tracing.verify_endorsement(tx));
    CHECK_FALSE(original.contains(Bytes(tx.address.prefix().begin(), tx.address.prefix().end())));
  }
  CHECK(endorsed == 5880);
  REQUIRE(a.diag.consent_log().size() == 1);
  CHECK(a.diag.consent_log()[0].accepted);
  CHECK(a.diag.consent_log()[0].claims == 14);

  // The re-coupled records decrypt to the patient's own plaintext.
  auto ex = extract_endorsed(a.tracing, a.keys, {0, 14 * kSecondsPerDay});
  CHECK(ex.records.size() == 5880);
}

TEST_CASE("forged pseudonyms abort the exchange") {
  Authority a;
  UserAgent patient = a.user(6), other = a.user(7);
  for (const GeoRecord& r : day_samples(0, 1800, 55.87, -4.28)) {
    a.upload(user_tick(patient, r));
    a.upload(user_tick(other, r));
  }
  const std::size_t before = a.tracing.size();
  Bytes challenge = a.diag.issue_challenge(a.rng);

  SUBCASE("a record under someone else's pseudonym") {
    Disclosure d = patient.disclose(challenge, kSecondsPerDay, 14);
    Disclosure stolen = other.disclose(challenge, kSecondsPerDay, 14);
    d.records.push_back(stolen.records.front());
    CHECK(code_of([&] {
            diagnose(a.diag, d, challenge, a.tracing, a.ca.public_key(), kSecondsPerDay, a.rng);
          }) == ErrorCode::kOwnershipFailed);
  }
  SUBCASE("a claim copied from another user") {
    Disclosure d = patient.disclose(challenge, kSecondsPerDay, 14);
    Disclosure stolen = other.disclose(challenge, kSecondsPerDay, 14);
    d.claims.push_back(stolen.claims.front());
    d.claims.back().signature[3] ^= 0x10;
    d.records.push_back(stolen.records.front());
    CHECK(code_of([&] {
            diagnose(a.diag, d, challenge, a.tracing, a.ca.public_key(), kSecondsPerDay, a.rng);
          }) == ErrorCode::kOwnershipFailed);
  }
  SUBCASE("a proof made for another challenge") {
    Disclosure d = patient.disclose(a.diag.issue_challenge(a.rng), kSecondsPerDay, 14);
    CHECK(code_of([&] {
            diagnose(a.diag, d, challenge, a.tracing, a.ca.public_key(), kSecondsPerDay, a.rng);
          }) == ErrorCode::kOwnershipFailed);
  }
  CHECK(a.tracing.size() == before);
  REQUIRE(a.diag.consent_log().size() == 1);
  CHECK_FALSE(a.diag.consent_log()[0].accepted);
}

TEST_CASE("consent is required") {
  Authority a;
  UserAgent patient = a.user(8);
  for (const GeoRecord& r : day_samples(0, 1800, 55.87, -4.28)) a.upload(user_tick(patient, r));
  patient.consent = false;
  const std::size_t before = a.tracing.size();
  CHECK(code_of([&] {
          diagnose(a.diag, patient, a.tracing, a.ca.public_key(), 14, kSecondsPerDay, a.rng);
        }) == ErrorCode::kNoConsent);
  CHECK(code_of([&] { patient.disclose(Bytes(32, 0), kSecondsPerDay, 14); }) ==
        ErrorCode::kNoConsent);
  CHECK(a.tracing.size() == before);
  CHECK_FALSE(patient.isolated);
}

TEST_CASE("self_match finds own endorsed pseudonyms only") {
  Authority a;
  UserAgent exposed = a.user(9), clean = a.user(10);
  for (int day = 0; day < 3; ++day) {
    for (const GeoRecord& r : day_samples(day, 1800, 55.87, -4.28)) {
      user_tick(exposed, r);
      user_tick(clean, r);
    }
  }
  auto mine = exposed.own_prefixes();
  REQUIRE(mine.size() == 3);
  publish({{fingerprint(mine[1].second), Risk::kLow, mine[1].first, 1, 0.0},
           {fingerprint(mine[1].second), Risk::kHigh, mine[1].first, 1, 0.0},
           {fingerprint(mine[2].second), Risk::kLow, mine[2].first, 1, 0.0}},
          a.notifications, a.solver);
  auto got = self_match(exposed, a.notifications, 0);
  CHECK(got == std::vector<std::pair<std::int64_t, Risk>>{{1, Risk::kHigh}, {2, Risk::kLow}});
  CHECK(self_match(exposed, a.notifications, 2) ==
        std::vector<std::pair<std::int64_t, Risk>>{{2, Risk::kLow}});
  CHECK(self_match(clean, a.notifications, 0).empty());

  // A fingerprint published under another epoch does not count.
  publish({{fingerprint(mine[0].second), Risk::kHigh, 7, 1, 0.0}}, a.notifications, a.solver);
  CHECK(self_match(exposed, a.notifications, 0).size() == 2);
}

TEST_CASE("symptom self-marks") {
  Authority a;
  UserAgent u = a.user(11), v = a.user(12);
  CHECK(symptom_prefix("fever", Width::kW64) == symptom_prefix("fever", Width::kW64));
  CHECK(symptom_prefix("fever", Width::kW64).size() == 32);
  CHECK(symptom_prefix("fever", Width::kW32).size() == 16);
  CHECK(symptom_prefix("fever", Width::kW64) != symptom_prefix("cough", Width::kW64));
  TxId x = self_mark_symptoms(u, "fever", at(55.87, -4.28, 1000), a.tracing, a.rng);
  TxId y = self_mark_symptoms(v, "fever", at(55.87, -4.28, 1100), a.tracing, a.rng);
  auto tx = a.tracing.get(x), ty = a.tracing.get(y);
  REQUIRE(tx);
  REQUIRE(ty);
  CHECK(tx->untrusted);
  CHECK_FALSE(tx->endorsed());
  CHECK(std::ranges::equal(tx->address.prefix(), ty->address.prefix()));
  CHECK(std::ranges::equal(tx->address.prefix(), symptom_prefix("fever", Width::kW64)));
  CHECK(a.keys.decrypt(tx->ciphertext).timestamp == 1000);
}

TEST_CASE("scenario parsing") {
  Scenario s = parse_scenario(R"({"users": 3, "days": 2, "seed": 9,
      "cases": [{"day": 1, "user": 2}],
      "policy": {"high_radius_m": 12},
      "upload_policy": "batched", "address_width": 32})");
  CHECK(s.users == 3);
  CHECK(s.cases.size() == 1);
  CHECK(s.policy.high_radius_m == 12.0);
  CHECK(s.upload_policy == UploadPolicy::kBatchedOnCharge);
  CHECK(s.address_width == Width::kW32);

  for (const char* bad : {
           "{not json",
           R"({"users": -5})",
           R"({"users": 3, "colour": "red"})",
           R"({"users": 3, "days": 2, "cases": [{"day": 9, "user": 0}]})",
           R"({"users": 3, "forced_contacts": [{"patient": -1, "contact": 0}]})",
           R"({"users": 1.5})",
           R"({"users": 3, "policy": {"high_radius_m": 0}})",
           R"({"users": 3, "address_width": 48})",
           R"({"users": 3, "upload_policy": "sometimes"})",
           R"({"users": "three"})",
       }) {
    CAPTURE(std::string(bad));
    CHECK(code_of([&] { parse_scenario(bad); }) == ErrorCode::kConfigError);
  }
  CHECK(code_of([] { load_scenario("/nonexistent/scenario.json"); }) == ErrorCode::kConfigError);
}

TEST_CASE("a scenario without patients publishes nothing") {
  Scenario s;
  s.users = 10;
  s.days = 2;
  ScenarioResult r = run_scenario(s);
  CHECK(r.notifications->size() == 0);
  CHECK(r.report.diagnoses == 0);
  CHECK(r.report.tracing_appended == 10 * 2 * 28);
  for (std::size_t u = 0; u < 10; ++u) {
    std::size_t count = 0;
    for (const auto& up : r.truth.uploads) count += up.user == u;
    CHECK(count == 56);
  }
}

TEST_CASE("batched scenarios upload at charge time") {
  Scenario s;
  s.users = 4;
  s.days = 2;
  s.upload_policy = UploadPolicy::kBatchedOnCharge;
  ScenarioResult r = run_scenario(s);
  REQUIRE(r.truth.uploads.size() == 4 * 2 * 28);
  for (const auto& up : r.truth.uploads) {
    CHECK(up.uploaded_at == epoch_of(up.record.timestamp) * kSecondsPerDay + s.charge_time_s);
  }
}

TEST_CASE("forced 20-minute contact at 5 m is caught with perfect precision and recall") {
  Scenario s;
  s.users = 50;
  s.days = 3;
  s.seed = 11;
  s.cadence_s = 60;
  s.forced_contacts.push_back({0, 1, 1, 36000, 1200, 5.0});
  s.cases.push_back({2, 0, 12 * 3600});
  ScenarioResult r = run_scenario(s);
  CHECK(r.report.diagnoses == 1);
  const auto pipeline = highs(r.pipeline);
  CHECK(pipeline.contains({1, 1}));
  CHECK(r.report.high_confusion.precision() == 1.0);
  CHECK(r.report.high_confusion.recall() == 1.0);
  CHECK(pipeline == highs(oracle::exposures(r.truth, s.policy)));
  // The contact learns it on their own device.
  bool told = false;
  for (auto [epoch, risk] : r.exposures[1]) told |= (epoch == 1 && risk == Risk::kHigh);
  CHECK(told);
}

TEST_CASE("scenario High sets equal the independent oracle") {
  for (std::uint64_t seed : {3, 4}) {
    Scenario s;
    s.users = 40;
    s.days = 5;
    s.seed = seed;
    s.daily_cases = 1;
    s.mobility.half_extent_m = 300;
    s.forced_contacts.push_back({0, 1, 1, 36000, 5400, 5.0});
    s.cases.push_back({3, 0, 15 * 3600});
    ScenarioResult r = run_scenario(s);
    CAPTURE(seed);
    const auto expect = highs(oracle::exposures(r.truth, s.policy));
    CHECK(highs(r.pipeline) == expect);
    CHECK(expect.size() > 1);
    CHECK(r.report.high_confusion.fp == 0);
    CHECK(r.report.high_confusion.fn == 0);
  }
}

TEST_CASE("endorsed prefixes never repeat a patient's own prefixes") {
  Scenario s;
  s.users = 20;
  s.days = 4;
  s.daily_cases = 1;
  ScenarioResult r = run_scenario(s);
  REQUIRE(!r.truth.cases.empty());
  std::set<Bytes> endorsed;
  for (const auto& [id, tx] : r.tracing->snapshot()) {
    if (tx.endorsed()) endorsed.emplace(tx.address.prefix().begin(), tx.address.prefix().end());
  }
  for (const auto& c : r.truth.cases) {
    for (const auto& p : c.original_prefixes) CHECK_FALSE(endorsed.contains(p));
  }
}

TEST_CASE("scenarios are deterministic under their seed") {
  Scenario s;
  s.users = 15;
  s.days = 3;
  s.seed = 42;
  s.daily_cases = 1;
  s.suppression = true;
  s.geodata.perturb_m = 5;
  ScenarioResult a = run_scenario(s), b = run_scenario(s);
  CHECK(jsonl(*a.tracing) == jsonl(*b.tracing));
  CHECK(jsonl(*a.notifications) == jsonl(*b.notifications));
  CHECK(a.report.to_json() == b.report.to_json());
  s.seed = 43;
  ScenarioResult c = run_scenario(s);
  CHECK(jsonl(*a.tracing) != jsonl(*c.tracing));
}
