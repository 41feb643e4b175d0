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

#include <sstream>

#include "beeptrace/error.hpp"
#include "beeptrace/estimators.hpp"
#include "doctest.h"

using namespace beeptrace;

namespace {

CapacityParams with_users(double n) {
  CapacityParams p;
  p.n_users = n;
  return p;
}

}  // namespace

TEST_CASE("storage over the window") {
  CapacityParams p = with_users(1e6);
  // 1e6 users x 48 addresses x 14 days x 64 bytes, multiplied out by hand.
  CHECK(storage_bytes(p) == doctest::Approx(43'008'000'000.0).epsilon(1e-12));
  const double full = storage_bytes(p);
  p.addr_bytes = 32;
  CHECK(storage_bytes(p) == doctest::Approx(full / 2).epsilon(1e-12));
  CHECK(storage_bytes(with_users(0)) == 0.0);
}

TEST_CASE("network throughput") {
  CHECK(network_tps(with_users(70e6)) == doctest::Approx(38888.9).epsilon(0.1 / 38888.9));
  CHECK(network_tps(with_users(1800)) == 1.0);
  CHECK(network_tps(with_users(2 * 70e6)) == doctest::Approx(2 * network_tps(with_users(70e6))));
}

TEST_CASE("matching cost is bilinear") {
  CapacityParams p = with_users(70e6);
  p.daily_cases = 0;
  CHECK(matching_core_seconds(p) == 0.0);
  p.daily_cases = 10'000;
  const double base = matching_core_seconds(p);
  CapacityParams twice_cases = p;
  twice_cases.daily_cases *= 2;
  CHECK(matching_core_seconds(twice_cases) == doctest::Approx(2 * base));
  CapacityParams twice_users = p;
  twice_users.n_users *= 2;
  CHECK(matching_core_seconds(twice_users) == doctest::Approx(2 * base));
  CapacityParams world = p;
  world.n_users = 4e9;
  CHECK(matching_core_seconds(world) / base == doctest::Approx(4e9 / 70e6));
  // 10^4 cases x 28 records x (70e6 x 48 x 14) live records x 0.1 ms.
  CHECK(base == doctest::Approx(1e4 * 28 * 70e6 * 48 * 14 * 1e-4));
}

TEST_CASE("user download volume") {
  CapacityParams p;
  p.daily_cases = 10'000;
  p.r = 15;
  CHECK(user_daily_download_bytes(p) == doctest::Approx(33.6e6).epsilon(0.005));
  p.r = 3;
  CHECK(user_daily_download_bytes(p) == doctest::Approx(6.72e6).epsilon(0.01));
  CHECK(user_daily_download_bytes(p) / 1e6 == doctest::Approx(6.7).epsilon(0.01));
  p.r = 0;
  CHECK(user_daily_download_bytes(p) == 0.0);
}

TEST_CASE("user upload volume") {
  CapacityParams p;
  CHECK(user_daily_upload_bytes(p) == 1792.0);
  p.addr_bytes = 32;
  CHECK(user_daily_upload_bytes(p) == 896.0);
  p.active_hours = 0;
  CHECK(user_daily_upload_bytes(p) == 0.0);
}

TEST_CASE("patient record counts") {
  CapacityParams p;
  auto c = patient_record_counts(p);
  CHECK(c.per_day == 420.0);
  CHECK(c.per_window == 5880.0);
  CHECK(c.deduped == 210.0);
  p.r = 1;
  c = patient_record_counts(p);
  CHECK(c.per_day == 28.0);
  CHECK(c.per_window == 392.0);
  CHECK(c.deduped == 14.0);
  p.r = 3;
  CHECK(patient_record_counts(p).deduped == 42.0);
}

TEST_CASE("estimators are homogeneous in their lead parameter") {
  for (double k : {0.5, 3.0, 10.0}) {
    CapacityParams a, b;
    b.n_users = a.n_users * k;
    CHECK(storage_bytes(b) == doctest::Approx(k * storage_bytes(a)));
    CHECK(network_tps(b) == doctest::Approx(k * network_tps(a)));
    CapacityParams c, d;
    d.daily_cases = c.daily_cases * k;
    CHECK(user_daily_download_bytes(d) == doctest::Approx(k * user_daily_download_bytes(c)));
  }
}

TEST_CASE("parameter validation") {
  CapacityParams p;
  p.n_users = -1;
  CHECK_THROWS_AS(storage_bytes(p), Error);
  p = {};
  p.addr_bytes = 48;
  CHECK_THROWS_AS(storage_bytes(p), Error);
  p = {};
  p.interval_s = 0;
  CHECK_THROWS_AS(network_tps(p), Error);
}

TEST_CASE("sweeps and CSV") {
  auto vals = sweep_values(1e6, 1e9, 4, true);
  REQUIRE(vals.size() == 4);
  CHECK(vals[1] == doctest::Approx(1e7));
  CHECK(vals.back() == 1e9);
  CHECK(sweep_values(0, 10, 3, false) == std::vector<double>{0, 5, 10});
  CHECK_THROWS_AS(sweep_values(0, 10, 3, true), Error);

  auto rows = sweep(CapacityParams{}, "users", {1800, 70e6});
  bool found = false;
  for (const auto& r : rows) {
    if (r.metric == "network_tps" && r.value == 70e6) {
      CHECK(r.result == doctest::Approx(38888.9).epsilon(1e-5));
      found = true;
    }
  }
  CHECK(found);
  CHECK_THROWS_AS(sweep(CapacityParams{}, "colour", {1}), Error);

  std::ostringstream out;
  write_sweep_csv(out, sweep(CapacityParams{}, "r", {15}));
  const std::string csv = out.str();
  CHECK(csv.rfind("parameter,value,metric,result\n", 0) == 0);
  CHECK(csv.find("r,15,user_daily_download_mb,33.6\n") != std::string::npos);
  CHECK(csv.find("r,15,patient_records_deduped,210\n") != std::string::npos);
}
