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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "beeptrace/agents.hpp"
#include "beeptrace/error.hpp"
#include "beeptrace/estimators.hpp"
#include "beeptrace/ledger.hpp"
#include "beeptrace/solver.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace beeptrace;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

Level log_level() {
  const char* env = std::getenv("BEEPTRACE_LOG");
  if (!env) return Level::kWarn;
  std::string v = env;
  if (v == "error") return Level::kError;
  if (v == "info") return Level::kInfo;
  if (v == "debug") return Level::kDebug;
  return Level::kWarn;
}

void log(Level level, const std::string& msg) {
  static const Level threshold = log_level();
  if (level > threshold) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "beeptrace: " << names[static_cast<int>(level)] << ": " << msg << "\n";
}

// Config problems exit 2, everything else 1.
int exit_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConfigError:
    case ErrorCode::kBadPolicy:
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot read " + path.string());
  return in;
}

int cmd_simulate(const fs::path& config, const fs::path& output,
                 std::optional<std::uint64_t> seed) {
  Scenario s = load_scenario(config);
  if (seed) s.seed = *seed;
  log(Level::kInfo, "simulating " + std::to_string(s.users) + " users over " +
                        std::to_string(s.days) + " days");
  ScenarioResult r = run_scenario(s);
  write_scenario_outputs(r, output);
  log(Level::kInfo, "wrote " + output.string());
  std::cout << r.report.to_json();
  return kExitOk;
}

int cmd_estimate(const CapacityParams& p, const std::string& sweep_param, double from,
                 double to, int steps, bool log_scale) {
  p.validate();
  std::vector<SweepRow> rows;
  if (sweep_param.empty()) {
    rows = evaluate_metrics(p, "base", 0);
  } else {
    rows = sweep(p, sweep_param, sweep_values(from, to, steps, log_scale));
  }
  write_sweep_csv(std::cout, rows);
  return kExitOk;
}

// Rebuilds the tracing ledger from a snapshot. Parents that were pruned before
// the snapshot are re-rooted at genesis, as the live ledger did.
std::unique_ptr<TracingLedger> load_tracing(const fs::path& path,
                                            const ScenarioAuthorities* auth,
                                            const Scenario* s) {
  auto in = open_input(path);
  auto rows = read_tracing_jsonl(in);
  auto ledger = std::make_unique<TracingLedger>();
  if (auth && s) {
    for (const auto& [id, seed] : auth->diagnosticians) {
      ledger->authorize_diagnostician(id, DiagnosticianAgent(id, seed, s->address_width).public_key());
    }
  }
  std::map<TxId, TxId> remap{{kGenesis, kGenesis}};
  for (auto& [id, tx] : rows) {
    std::vector<TxId> parents;
    for (TxId p : tx.parents) {
      auto it = remap.find(p);
      TxId np = it == remap.end() ? kGenesis : it->second;
      if (std::find(parents.begin(), parents.end(), np) == parents.end()) parents.push_back(np);
    }
    tx.parents = parents;
    if (!auth) tx.endorsement.reset();
    remap[id] = ledger->append_tracing(tx);
  }
  return ledger;
}

int cmd_solve(const fs::path& config, const fs::path& input, std::optional<std::int64_t> now,
              std::optional<std::uint64_t> seed) {
  Scenario s = load_scenario(config);
  if (seed) s.seed = *seed;
  ScenarioAuthorities auth = derive_authorities(s);
  auto tracing = load_tracing(input / "tracing.jsonl", &auth, &s);
  KeyRegistry keys;
  for (const GeoEnvelopeKey& k : auth.geo_keys) keys.add(k);
  const std::int64_t at = now ? *now : static_cast<std::int64_t>(s.days) * kSecondsPerDay;
  for (const Revocation& r : s.revocations) {
    if (r.day * kSecondsPerDay <= at) keys.revoke(r.key_id);
  }
  NotificationLedger notifications;
  notifications.authorize_solver(auth.solver.solver_id, auth.solver.key.public_key);
  SolveOutcome out = run_solver(*tracing, notifications, keys, auth.solver, s.policy, at,
                                s.regions, s.match);
  json j = json::parse(out.report.to_json());
  j["published"] = out.report.published;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_inspect(const fs::path& input, const std::string& suffix_hex,
                std::optional<double> horizon_days, std::optional<std::int64_t> now) {
  fs::path tracing_path = input, notif_path;
  if (fs::is_directory(input)) {
    tracing_path = input / "tracing.jsonl";
    notif_path = input / "notification.jsonl";
  } else if (input.filename() == "notification.jsonl") {
    tracing_path.clear();
    notif_path = input;
  }
  if (tracing_path.empty() && notif_path.empty()) {
    throw Error(ErrorCode::kConfigError, "nothing to inspect");
  }
  json out = json::object();
  if (!tracing_path.empty()) {
    auto in = open_input(tracing_path);
    auto rows = read_tracing_jsonl(in);
    std::size_t endorsed = 0, untrusted = 0, bytes = 0, address_bytes = 0;
    std::int64_t newest = 0;
    for (const auto& [id, tx] : rows) {
      endorsed += tx.endorsed();
      untrusted += tx.untrusted;
      bytes += serialize_tx(tx).size();
      address_bytes += tx.address.serialized().size();
      newest = std::max(newest, tx.timestamp);
    }
    out["tracing"] = {{"tx_count", rows.size()},
                      {"endorsed", endorsed},
                      {"untrusted", untrusted},
                      {"bytes_stored", bytes},
                      {"address_bytes", address_bytes},
                      {"newest_timestamp", newest}};
    if (!suffix_hex.empty()) {
      Bytes suffix = from_hex(suffix_hex);
      json hits = json::array();
      for (const auto& [id, tx] : rows) {
        ByteView s = tx.address.suffix();
        if (Bytes(s.begin(), s.end()) == suffix) {
          hits.push_back({{"id", id}, {"address", tx.address.hex()},
                          {"timestamp", tx.timestamp}, {"endorsed", tx.endorsed()}});
        }
      }
      out["suffix_hits"] = hits;
    }
    if (horizon_days) {
      const std::int64_t at = now ? *now : newest;
      const auto cutoff = at - static_cast<std::int64_t>(*horizon_days * kSecondsPerDay);
      std::size_t remove = 0;
      for (const auto& [id, tx] : rows) remove += tx.timestamp < cutoff;
      out["prune_preview"] = {{"now", at},
                              {"cutoff", cutoff},
                              {"would_remove", remove},
                              {"would_keep", rows.size() - remove}};
    }
  }
  if (!notif_path.empty()) {
    auto in = open_input(notif_path);
    auto entries = read_notification_jsonl(in);
    std::size_t high = 0;
    for (const auto& e : entries) high += e.risk == Risk::kHigh;
    out["notifications"] = {{"entry_count", entries.size()},
                            {"high", high},
                            {"low", entries.size() - high}};
  }
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_keys(const fs::path& config, std::optional<std::uint64_t> seed) {
  Scenario s = load_scenario(config);
  if (seed) s.seed = *seed;
  KeyRegistry keys;
  for (const GeoEnvelopeKey& k : derive_authorities(s).geo_keys) keys.add(k);
  for (const Revocation& r : s.revocations) {
    if (!keys.is_revoked(r.key_id)) keys.revoke(r.key_id);
  }
  std::cout << keys.snapshot_json() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beeptrace: contact tracing ledger simulator and capacity estimator"};
  app.require_subcommand(1);

  std::string config, output, input, suffix, sweep_param;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> now;
  std::optional<double> horizon_days;

  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write its outputs");
  simulate->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--output", output, "Output directory")->required();
  simulate->add_option("--seed", seed, "Override the scenario seed");

  CapacityParams params;
  double from = 0, to = 0;
  int steps = 10;
  bool log_scale = false;
  auto* estimate = app.add_subcommand(
      "estimate",
      "Capacity estimates as CSV with columns parameter,value,metric,result. Without "
      "--sweep a single block of rows tagged parameter=base is printed");
  estimate->add_option("--users", params.n_users, "Participants")->capture_default_str();
  estimate->add_option("--cases", params.daily_cases, "Diagnosed cases per day")
      ->capture_default_str();
  estimate->add_option("--r", params.r, "Addresses co-located per stay")->capture_default_str();
  estimate->add_option("--addr-bytes", params.addr_bytes, "Address width (32 or 64)")
      ->capture_default_str();
  estimate->add_option("--window-days", params.window_days, "Retention window")
      ->capture_default_str();
  estimate->add_option("--interval-s", params.interval_s, "Seconds between addresses")
      ->capture_default_str();
  estimate->add_option("--lookup-ms", params.lookup_ms, "Matching cost per record pair")
      ->capture_default_str();
  estimate->add_option("--active-hours", params.active_hours, "User active hours per day")
      ->capture_default_str();
  estimate->add_option("--addrs-per-day", params.addrs_per_day, "Network-side addresses per day")
      ->capture_default_str();
  estimate->add_option("--sweep", sweep_param,
                       "Parameter to sweep: users, cases, r, addr_bytes, window_days, "
                       "interval_s, lookup_ms, addrs_per_day, active_hours, fp_bytes");
  estimate->add_option("--from", from, "Sweep start");
  estimate->add_option("--to", to, "Sweep end");
  estimate->add_option("--steps", steps, "Sweep points")->capture_default_str();
  estimate->add_flag("--log", log_scale, "Logarithmic sweep spacing");

  auto* solve = app.add_subcommand("solve", "Re-run the solver over a simulate output directory");
  solve->add_option("--config", config, "Scenario JSON used for the run")
      ->required()
      ->check(CLI::ExistingFile);
  solve->add_option("--input", input, "Directory written by simulate")->required();
  solve->add_option("--seed", seed, "Seed override used for the run");
  solve->add_option("--now", now, "Solver time (default: end of the last day)");

  auto* inspect = app.add_subcommand("inspect", "Summarize ledger snapshots (read-only)");
  inspect->add_option("--input", input, "Output directory or a .jsonl snapshot")->required();
  inspect->add_option("--suffix", suffix, "Hex suffix to look up");
  inspect->add_option("--prune-horizon-days", horizon_days, "Preview a prune at this horizon");
  inspect->add_option("--now", now, "Reference time for the prune preview");

  auto* keys = app.add_subcommand("keys", "Print the CA geodata key registry for a scenario");
  keys->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  keys->add_option("--seed", seed, "Seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(config, output, seed);
    if (*estimate) return cmd_estimate(params, sweep_param, from, to, steps, log_scale);
    if (*solve) return cmd_solve(config, input, now, seed);
    if (*inspect) {
      if (!fs::exists(input)) {
        log(Level::kError, "no such file: " + input);
        return kExitUsage;
      }
      return cmd_inspect(input, suffix, horizon_days, now);
    }
    if (*keys) return cmd_keys(config, seed);
  } catch (const Error& e) {
    log(Level::kError, e.what());
    return exit_for(e);
  } catch (const std::exception& e) {
    log(Level::kError, e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
