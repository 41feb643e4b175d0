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

#include <iosfwd>
#include <string>
#include <vector>

namespace beeptrace {

// Inputs for the closed-form capacity model. Counts are doubles because the
// interesting populations (4e9 users) overflow nothing but read better in
// scientific notation.
struct CapacityParams {
  double n_users = 1e6;
  int addr_bytes = 64;
  // Network side: one address every interval_s around the clock.
  double addrs_per_day = 48;
  // User side: addresses are only produced during active hours.
  double active_hours = 14;
  double window_days = 14;
  double interval_s = 1800;
  double lookup_ms = 0.1;
  // Addresses co-located with a patient per stay.
  double r = 15;
  double fp_bytes = 16;
  double daily_cases = 10'000;

  double user_addrs_per_day() const { return active_hours * 3600.0 / interval_s; }

  // Throws Error(kInvalidArgument) for negative or non-finite fields, a
  // non-positive interval, or addr_bytes outside {32, 64}.
  void validate() const;
};

// Tracing-chain bytes retained over the window.
double storage_bytes(const CapacityParams& p);

double network_tps(const CapacityParams& p);

// Single-thread core-seconds per day spent matching every patient record
// against every live record.
double matching_core_seconds(const CapacityParams& p);

// Fingerprints a user downloads from the notification chain per day.
double user_daily_download_bytes(const CapacityParams& p);

double user_daily_upload_bytes(const CapacityParams& p);

struct PatientRecordCounts {
  double per_day = 0;
  double per_window = 0;
  double deduped = 0;
};

PatientRecordCounts patient_record_counts(const CapacityParams& p);

struct SweepRow {
  std::string parameter;
  double value = 0;
  std::string metric;
  double result = 0;
};

// Every metric evaluated at `p`, tagged with the swept parameter's name/value.
std::vector<SweepRow> evaluate_metrics(const CapacityParams& p, const std::string& parameter,
                                       double value);

// Re-evaluates all metrics with `parameter` set to each of `values`. Known
// parameters: users, cases, r, addr_bytes, window_days, interval_s, lookup_ms,
// addrs_per_day, active_hours, fp_bytes. Throws Error(kInvalidArgument).
std::vector<SweepRow> sweep(CapacityParams p, const std::string& parameter,
                            const std::vector<double>& values);

// `count` points spaced logarithmically (or linearly) from lo to hi inclusive.
std::vector<double> sweep_values(double lo, double hi, int count, bool log_scale);

// Header `parameter,value,metric,result`.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace beeptrace
