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

#include "beeptrace/estimators.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "beeptrace/error.hpp"

namespace beeptrace {

void CapacityParams::validate() const {
  const double fields[] = {n_users,   addrs_per_day, active_hours, window_days, interval_s,
                           lookup_ms, r,             fp_bytes,     daily_cases};
  for (double f : fields) {
    if (!std::isfinite(f) || f < 0) {
      throw Error(ErrorCode::kInvalidArgument, "capacity parameters must be finite and >= 0");
    }
  }
  if (!(interval_s > 0)) throw Error(ErrorCode::kInvalidArgument, "interval must be > 0");
  if (addr_bytes != 32 && addr_bytes != 64) {
    throw Error(ErrorCode::kInvalidArgument, "addr_bytes must be 32 or 64");
  }
}

double storage_bytes(const CapacityParams& p) {
  p.validate();
  return p.n_users * p.addrs_per_day * p.window_days * p.addr_bytes;
}

double network_tps(const CapacityParams& p) {
  p.validate();
  return p.n_users / p.interval_s;
}

double matching_core_seconds(const CapacityParams& p) {
  p.validate();
  const double patient_records = p.daily_cases * p.user_addrs_per_day();
  const double live_records = p.n_users * p.addrs_per_day * p.window_days;
  return patient_records * live_records * p.lookup_ms / 1000.0;
}

double user_daily_download_bytes(const CapacityParams& p) {
  p.validate();
  return p.daily_cases * p.window_days * p.r * p.fp_bytes;
}

double user_daily_upload_bytes(const CapacityParams& p) {
  p.validate();
  return p.user_addrs_per_day() * p.addr_bytes;
}

PatientRecordCounts patient_record_counts(const CapacityParams& p) {
  p.validate();
  PatientRecordCounts c;
  c.per_day = p.user_addrs_per_day() * p.r;
  c.per_window = c.per_day * p.window_days;
  // The solver collapses a pseudonym-day to one verdict.
  c.deduped = p.window_days * p.r;
  return c;
}

std::vector<SweepRow> evaluate_metrics(const CapacityParams& p, const std::string& parameter,
                                       double value) {
  PatientRecordCounts counts = patient_record_counts(p);
  const double download = user_daily_download_bytes(p);
  return {
      {parameter, value, "storage_bytes", storage_bytes(p)},
      {parameter, value, "network_tps", network_tps(p)},
      {parameter, value, "matching_core_seconds", matching_core_seconds(p)},
      {parameter, value, "user_daily_download_bytes", download},
      {parameter, value, "user_daily_download_mb", download / 1e6},
      {parameter, value, "user_daily_upload_bytes", user_daily_upload_bytes(p)},
      {parameter, value, "patient_records_per_day", counts.per_day},
      {parameter, value, "patient_records_per_window", counts.per_window},
      {parameter, value, "patient_records_deduped", counts.deduped},
  };
}

std::vector<SweepRow> sweep(CapacityParams p, const std::string& parameter,
                            const std::vector<double>& values) {
  std::vector<SweepRow> rows;
  for (double v : values) {
    if (parameter == "users") {
      p.n_users = v;
    } else if (parameter == "cases") {
      p.daily_cases = v;
    } else if (parameter == "r") {
      p.r = v;
    } else if (parameter == "addr_bytes") {
      p.addr_bytes = static_cast<int>(v);
    } else if (parameter == "window_days") {
      p.window_days = v;
    } else if (parameter == "interval_s") {
      p.interval_s = v;
    } else if (parameter == "lookup_ms") {
      p.lookup_ms = v;
    } else if (parameter == "addrs_per_day") {
      p.addrs_per_day = v;
    } else if (parameter == "active_hours") {
      p.active_hours = v;
    } else if (parameter == "fp_bytes") {
      p.fp_bytes = v;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown sweep parameter " + parameter);
    }
    auto part = evaluate_metrics(p, parameter, v);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

std::vector<double> sweep_values(double lo, double hi, int count, bool log_scale) {
  if (count < 1 || !(lo <= hi) || (log_scale && !(lo > 0))) {
    throw Error(ErrorCode::kInvalidArgument, "bad sweep range");
  }
  std::vector<double> out;
  if (count == 1) return {lo};
  for (int i = 0; i < count; ++i) {
    double f = static_cast<double>(i) / (count - 1);
    out.push_back(log_scale ? std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)))
                            : lo + f * (hi - lo));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "parameter,value,metric,result\n";
  char buf[64];
  for (const SweepRow& row : rows) {
    out << row.parameter << ',';
    std::snprintf(buf, sizeof buf, "%.10g", row.value);
    out << buf << ',' << row.metric << ',';
    std::snprintf(buf, sizeof buf, "%.10g", row.result);
    out << buf << '\n';
  }
}

}  // namespace beeptrace
