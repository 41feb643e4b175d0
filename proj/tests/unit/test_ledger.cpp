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

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "beeptrace/error.hpp"
#include "beeptrace/ledger.hpp"
#include "doctest.h"

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

TracingTx make_tx(Rng& rng, std::int64_t ts, std::vector<TxId> parents,
                  Width w = Width::kW64) {
  Bytes p(half_bytes(w)), s(half_bytes(w)), ct(40 + rng.below(20));
  rng.fill(p);
  rng.fill(s);
  rng.fill(ct);
  TracingTx tx;
  tx.address = encode_tracecode(p, s, w);
  tx.ciphertext = ct;
  tx.timestamp = ts;
  tx.parents = std::move(parents);
  return tx;
}

Seed seed_of(std::uint64_t n) { return Rng(n).bytes<kSeedBytes>(); }

// Every live tx reaches genesis along effective links.
bool all_reach_genesis(const TracingLedger& l) {
  std::map<TxId, bool> memo{{kGenesis, true}};
  std::function<bool(TxId, int)> reach = [&](TxId id, int depth) -> bool {
    if (auto it = memo.find(id); it != memo.end()) return it->second;
    if (depth > 100000) return false;
    bool ok = false;
    for (TxId p : l.links(id)) ok = ok || reach(p, depth + 1);
    return memo[id] = ok;
  };
  for (const auto& [id, tx] : l.snapshot()) {
    if (!reach(id, 0)) return false;
  }
  return true;
}

std::size_t recomputed_bytes(const TracingLedger& l) {
  std::size_t total = 0;
  for (const auto& [id, tx] : l.snapshot()) total += serialize_tx(tx).size();
  return total;
}

NotificationEntry signed_entry(const SigningKey& k, const std::string& solver,
                               const Fingerprint& fp, Risk risk, std::int64_t epoch) {
  NotificationEntry e;
  e.fingerprint = fp;
  e.risk = risk;
  e.epoch = epoch;
  e.solver_id = solver;
  e.signature = k.sign(notification_message(fp, risk, epoch, solver));
  return e;
}

Fingerprint fp_of(std::uint64_t n) {
  Bytes b(32);
  Rng(n).fill(b);
  return fingerprint(b);
}

}  // namespace

TEST_CASE("fresh ledger has genesis as its only tip") {
  TracingLedger l;
  Rng rng(1);
  CHECK(l.tips() == std::vector<TxId>{kGenesis});
  CHECK(l.select_tips(rng) == std::vector<TxId>{kGenesis});
  CHECK(l.size() == 0);
  TxId id = l.append_tracing(make_tx(rng, 100, {kGenesis}));
  CHECK(id != kGenesis);
  CHECK(l.tips() == std::vector<TxId>{id});
  CHECK(l.get(id).has_value());
}

TEST_CASE("forks on disjoint parents both stay live") {
  TracingLedger l;
  Rng rng(2);
  TxId a = l.append_tracing(make_tx(rng, 10, {kGenesis}));
  TxId b = l.append_tracing(make_tx(rng, 11, {kGenesis}));
  TxId c = l.append_tracing(make_tx(rng, 12, {a}));
  TxId d = l.append_tracing(make_tx(rng, 12, {b}));
  CHECK(l.is_live(c));
  CHECK(l.is_live(d));
  auto tips = l.tips();
  CHECK(std::set<TxId>(tips.begin(), tips.end()) == std::set<TxId>{c, d});
}

TEST_CASE("concurrent appends on disjoint parents") {
  TracingLedger l;
  Rng seed(3);
  TxId a = l.append_tracing(make_tx(seed, 10, {kGenesis}));
  TxId b = l.append_tracing(make_tx(seed, 10, {kGenesis}));
  TracingTx ta = make_tx(seed, 20, {a}), tb = make_tx(seed, 20, {b});
  TxId ia = 0, ib = 0;
  std::thread t1([&] { ia = l.append_tracing(ta); });
  std::thread t2([&] { ib = l.append_tracing(tb); });
  t1.join();
  t2.join();
  CHECK(ia != ib);
  CHECK(l.get(ia) == ta);
  CHECK(l.get(ib) == tb);
  CHECK(l.size() == 4);
}

TEST_CASE("append validation") {
  TracingLedger l;
  Rng rng(4);
  CHECK(code_of([&] { l.append_tracing(make_tx(rng, 0, {42})); }) == ErrorCode::kUnknownParent);
  CHECK(code_of([&] { l.append_tracing(make_tx(rng, 0, {})); }) == ErrorCode::kInvalidArgument);
  TxId a = l.append_tracing(make_tx(rng, 1000, {kGenesis}));
  CHECK(code_of([&] { l.append_tracing(make_tx(rng, 1000, {a, a})); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { l.append_tracing(make_tx(rng, 1000, {a, kGenesis, kGenesis})); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { l.append_tracing(make_tx(rng, 699, {a})); }) == ErrorCode::kStaleTimestamp);
  CHECK_NOTHROW(l.append_tracing(make_tx(rng, 700, {a})));
  CHECK(l.size() == 2);
}

TEST_CASE("endorsements must verify under an authorized diagnostician") {
  TracingLedger l;
  Rng rng(5);
  SigningKey diag = SigningKey::from_seed(seed_of(1));
  l.authorize_diagnostician("diag-0", diag.public_key);
  TracingTx tx = make_tx(rng, 50, {kGenesis});
  tx.endorsement = Endorsement{"diag-0",
                               diag.sign(endorsement_message(tx.address, tx.ciphertext, 50))};
  CHECK(l.verify_endorsement(tx));
  TracingTx bad = tx;
  bad.timestamp = 51;
  CHECK(code_of([&] { l.append_tracing(bad); }) == ErrorCode::kBadSignature);
  TracingTx stranger = tx;
  stranger.endorsement->diagnostician_id = "diag-9";
  CHECK(code_of([&] { l.append_tracing(stranger); }) == ErrorCode::kBadSignature);
  TxId id = l.append_tracing(tx);
  CHECK(l.get(id)->endorsed());
}

TEST_CASE("tip selection is seeded and the DAG stays connected") {
  auto build = [](std::uint64_t seed) {
    auto l = std::make_unique<TracingLedger>();
    Rng rng(seed), data(99);
    std::vector<std::vector<TxId>> picks;
    for (int i = 0; i < 100; ++i) {
      auto parents = l->select_tips(rng);
      picks.push_back(parents);
      CHECK(parents.size() >= 1);
      CHECK(parents.size() <= 2);
      l->append_tracing(make_tx(data, 10 * i, parents));
    }
    return std::make_pair(std::move(l), picks);
  };
  auto [l1, p1] = build(7);
  auto [l2, p2] = build(7);
  CHECK(p1 == p2);
  CHECK(all_reach_genesis(*l1));
  // Acyclicity: every link points at an older id with no later timestamp.
  for (const auto& [id, tx] : l1->snapshot()) {
    for (TxId p : l1->links(id)) {
      CHECK(p < id);
      if (p != kGenesis) {
        CHECK(l1->get(p)->timestamp <= tx.timestamp + 300);
      }
    }
  }
}

TEST_CASE("suffix lookup equals a linear scan") {
  TracingLedger l;
  Rng rng(6), tips(7);
  std::vector<TracingTx> all;
  for (int i = 0; i < 1000; ++i) {
    TracingTx tx = make_tx(rng, i, l.select_tips(tips), i % 3 ? Width::kW64 : Width::kW32);
    // Some suffixes repeat.
    if (i % 10 == 9) {
      tx.address = encode_tracecode(tx.address.prefix(), all[i - 3].address.suffix(),
                                    all[i - 3].address.width());
    }
    all.push_back(tx);
    l.append_tracing(tx);
  }
  for (const TracingTx& q : all) {
    std::vector<TracingTx> expect;
    for (const TracingTx& t : all) {
      if (std::ranges::equal(t.address.suffix(), q.address.suffix())) expect.push_back(t);
    }
    CHECK(l.lookup_by_suffix(q.address.suffix()) == expect);
  }
  CHECK(l.lookup_by_suffix(Bytes(32, 0xee)).empty());
}

TEST_CASE("pruning agrees with a timestamp filter and is idempotent") {
  TracingLedger l;
  Rng rng(8), tips(9);
  std::vector<std::pair<TxId, std::int64_t>> ids;
  for (int i = 0; i < 500; ++i) {
    const std::int64_t ts = i * 100 + static_cast<std::int64_t>(rng.below(250));
    ids.emplace_back(l.append_tracing(make_tx(rng, ts, l.select_tips(tips))), ts);
  }
  CHECK(l.metrics().bytes_stored == recomputed_bytes(l));
  const std::int64_t now = l.clock(), horizon = 20000;
  std::set<TxId> expect;
  for (auto [id, ts] : ids) {
    if (ts >= now - horizon) expect.insert(id);
  }
  const std::size_t removed = l.prune(horizon);
  CHECK(removed == ids.size() - expect.size());
  std::set<TxId> live;
  for (const auto& [id, tx] : l.snapshot()) live.insert(id);
  CHECK(live == expect);
  CHECK(l.prune(horizon) == 0);
  CHECK(l.metrics().bytes_stored == recomputed_bytes(l));
  CHECK(l.metrics().pruned_count == removed);
  CHECK(all_reach_genesis(l));
  for (const auto& [id, tx] : l.snapshot()) {
    for (TxId p : l.links(id)) CHECK(l.is_live(p));
  }
  // Stored payloads keep their original parent lists.
  for (const auto& [id, tx] : l.snapshot()) CHECK(!tx.parents.empty());

  // New appends still work after re-rooting.
  auto parents = l.select_tips(tips);
  CHECK_NOTHROW(l.append_tracing(make_tx(rng, now + 1, parents)));

  l.prune(0, now + 10);
  CHECK(l.size() == 0);
  CHECK(l.metrics().bytes_stored == 0);
  CHECK(l.tips() == std::vector<TxId>{kGenesis});
}

TEST_CASE("for_each visits the snapshot in order") {
  TracingLedger l;
  Rng rng(12), tips(13);
  for (int i = 0; i < 50; ++i) l.append_tracing(make_tx(rng, i * 1000, l.select_tips(tips)));
  l.prune(20000);
  std::vector<std::pair<TxId, TracingTx>> seen;
  l.for_each([&](TxId id, const TracingTx& tx) { seen.emplace_back(id, tx); });
  CHECK(seen == l.snapshot());
  CHECK(seen.size() == 21);
}

TEST_CASE("observed TPS tracks N/1800") {
  TracingLedger l;
  Rng rng(10);
  const int n = 3600;
  TxId tip = kGenesis;
  std::vector<std::int64_t> times;
  for (int u = 0; u < n; ++u) times.push_back(static_cast<std::int64_t>(rng.below(1800)));
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<std::int64_t> ordered;
    for (auto t : times) ordered.push_back(t + rep * 1800);
    std::sort(ordered.begin(), ordered.end());
    for (auto t : ordered) tip = l.append_tracing(make_tx(rng, t, {tip}));
  }
  const double tps = l.metrics(5400).observed_tps;
  CHECK(tps == doctest::Approx(n / 1800.0).epsilon(0.05));
}

TEST_CASE("tracing JSONL round trip") {
  TracingLedger l;
  Rng rng(11);
  SigningKey diag = SigningKey::from_seed(seed_of(2));
  l.authorize_diagnostician("diag-0", diag.public_key);
  TxId a = l.append_tracing(make_tx(rng, 1, {kGenesis}));
  TracingTx e = make_tx(rng, 2, {a});
  e.endorsement = Endorsement{"diag-0", diag.sign(endorsement_message(e.address, e.ciphertext, 2))};
  TxId b = l.append_tracing(e);
  TracingTx u = make_tx(rng, 3, {b}, Width::kW32);
  u.untrusted = true;
  l.append_tracing(u);
  std::stringstream ss;
  l.write_jsonl(ss);
  CHECK(read_tracing_jsonl(ss) == l.snapshot());
}

TEST_CASE("notification ledger rules") {
  NotificationLedger n;
  SigningKey solver = SigningKey::from_seed(seed_of(3));
  SigningKey rogue = SigningKey::from_seed(seed_of(4));
  n.authorize_solver("solver-0", solver.public_key);

  auto e = signed_entry(solver, "solver-0", fp_of(1), Risk::kLow, 5);
  n.append_notification(e);
  CHECK(code_of([&] { n.append_notification(e); }) == ErrorCode::kDuplicateEntry);
  CHECK(code_of([&] {
          n.append_notification(signed_entry(rogue, "solver-0", fp_of(2), Risk::kLow, 5));
        }) == ErrorCode::kBadSignature);
  CHECK(code_of([&] {
          n.append_notification(signed_entry(rogue, "rogue", fp_of(2), Risk::kLow, 5));
        }) == ErrorCode::kBadSignature);
  auto tampered = signed_entry(solver, "solver-0", fp_of(2), Risk::kLow, 5);
  tampered.risk = Risk::kHigh;
  CHECK(code_of([&] { n.append_notification(tampered); }) == ErrorCode::kBadSignature);

  // Low can be upgraded to High once, never downgraded.
  n.append_notification(signed_entry(solver, "solver-0", fp_of(1), Risk::kHigh, 5));
  CHECK(code_of([&] {
          n.append_notification(signed_entry(solver, "solver-0", fp_of(1), Risk::kHigh, 5));
        }) == ErrorCode::kDuplicateEntry);
  CHECK(code_of([&] {
          n.append_notification(signed_entry(solver, "solver-0", fp_of(1), Risk::kLow, 5));
        }) == ErrorCode::kDuplicateEntry);
  // Another epoch is another key.
  n.append_notification(signed_entry(solver, "solver-0", fp_of(1), Risk::kLow, 6));
  CHECK(n.size() == 3);
  CHECK(n.read_notifications(6).size() == 1);
  CHECK(n.read_notifications(0).size() == 3);
  CHECK(n.read_notifications(7).empty());

  CHECK(n.latest(fp_of(1), 5) == Risk::kHigh);
  CHECK(n.latest(fp_of(1), 6) == Risk::kLow);
  CHECK_FALSE(n.latest(fp_of(2), 5));
  CHECK(n.is_authorized("solver-0", solver.public_key));
  CHECK_FALSE(n.is_authorized("solver-0", rogue.public_key));
  CHECK_FALSE(n.is_authorized("rogue", rogue.public_key));
}

TEST_CASE("one patient's deduplicated window yields 210 entries") {
  NotificationLedger n;
  SigningKey solver = SigningKey::from_seed(seed_of(5));
  n.authorize_solver("solver-0", solver.public_key);
  std::vector<NotificationEntry> sent;
  for (int day = 0; day < 14; ++day) {
    for (int r = 0; r < 15; ++r) {
      sent.push_back(signed_entry(solver, "solver-0", fp_of(1000 + day * 15 + r), Risk::kHigh, day));
      n.append_notification(sent.back());
    }
  }
  auto got = n.read_notifications(0);
  CHECK(got.size() == 210);
  CHECK(got == sent);

  std::stringstream ss;
  n.write_jsonl(ss);
  CHECK(read_notification_jsonl(ss) == sent);
}

TEST_CASE("notification appends are linearizable under contention") {
  NotificationLedger n;
  SigningKey solver = SigningKey::from_seed(seed_of(6));
  n.authorize_solver("solver-0", solver.public_key);
  std::vector<NotificationEntry> entries;
  for (int i = 0; i < 200; ++i) entries.push_back(signed_entry(solver, "solver-0", fp_of(i), Risk::kLow, 1));
  std::atomic<int> accepted{0}, dup{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (const auto& e : entries) {
        try {
          n.append_notification(e);
          ++accepted;
        } catch (const Error& err) {
          if (err.code() == ErrorCode::kDuplicateEntry) ++dup;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(accepted == 200);
  CHECK(dup == 600);
  CHECK(n.size() == 200);
}
