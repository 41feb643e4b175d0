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

#include "beeptrace/geodata.hpp"

#include <sodium.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <numbers>
#include <sstream>

#include "beeptrace/error.hpp"
#include "sodium_init.hpp"

namespace beeptrace {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMetersPerDegree = kEarthRadiusM * kPi / 180.0;

double radians(double deg) { return deg * kPi / 180.0; }

double wrap_lon(double lon) {
  if (lon >= -180.0 && lon <= 180.0) return lon;
  double w = std::fmod(lon + 180.0, 360.0);
  if (w < 0) w += 360.0;
  return w - 180.0;
}

double clamp_lat(double lat) { return std::clamp(lat, -90.0, 90.0); }

// Uniform doubles in [0, 1) drawn from a BLAKE2b digest of the inputs.
template <std::size_t N>
std::array<double, N> keyed_uniforms(ByteView key, std::string_view domain,
                                     ByteView extra) {
  static_assert(N * 8 <= 64);
  detail::ensure_sodium();
  crypto_generichash_state st;
  crypto_generichash_init(&st, nullptr, 0, N * 8);
  Bytes header;
  put_u32(header, static_cast<std::uint32_t>(domain.size()));
  put_bytes(header, as_bytes(domain));
  put_u32(header, static_cast<std::uint32_t>(key.size()));
  crypto_generichash_update(&st, header.data(), header.size());
  crypto_generichash_update(&st, key.data(), key.size());
  crypto_generichash_update(&st, extra.data(), extra.size());
  std::array<std::uint8_t, N * 8> digest{};
  crypto_generichash_final(&st, digest.data(), digest.size());
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    std::uint64_t x = 0;
    for (int b = 7; b >= 0; --b) x = (x << 8) | digest[i * 8 + b];
    out[i] = static_cast<double>(x >> 11) * 0x1.0p-53;
  }
  return out;
}

double snap_axis(double v, double cell, double limit) {
  double s = std::round(v / cell) * cell;
  if (s > limit) s -= cell;
  if (s < -limit) s += cell;
  return s;
}

struct ShiftField {
  double offset_n, offset_e, amplitude, wavenumber;
  double phase[4];

  ShiftField(ByteView key, const DatumShiftParams& p) {
    auto u = keyed_uniforms<6>(key, "beeptrace/datum-shift", {});
    double magnitude = p.min_offset_m + (p.max_offset_m - p.min_offset_m) * u[0];
    double theta = 2 * kPi * u[1];
    offset_n = magnitude * std::cos(theta);
    offset_e = magnitude * std::sin(theta);
    amplitude = p.amplitude_m;
    wavenumber = 2 * kPi / p.wavelength_m;
    for (int i = 0; i < 4; ++i) phase[i] = 2 * kPi * u[2 + i];
  }

  // Forward map in degrees, without wrapping.
  std::pair<double, double> apply(double lat, double lon) const {
    double y = lat * kMetersPerDegree;
    double x = lon * kMetersPerDegree;
    double dn = offset_n + amplitude * std::sin(wavenumber * y + phase[0]) *
                               std::cos(wavenumber * x + phase[1]);
    double de = offset_e + amplitude * std::cos(wavenumber * y + phase[2]) *
                               std::sin(wavenumber * x + phase[3]);
    double cos_lat = std::max(std::cos(radians(lat)), 1e-9);
    return {lat + dn / kMetersPerDegree, lon + de / (kMetersPerDegree * cos_lat)};
  }
};

}  // namespace

void validate(const GeoRecord& r) {
  if (!(r.lat >= -90.0 && r.lat <= 90.0) || !(r.lon >= -180.0 && r.lon <= 180.0)) {
    throw Error(ErrorCode::kInvalidCoordinate,
                "lat/lon out of range: " + std::to_string(r.lat) + "," +
                    std::to_string(r.lon));
  }
}

double haversine_distance(const GeoRecord& a, const GeoRecord& b) {
  validate(a);
  validate(b);
  double phi1 = radians(a.lat), phi2 = radians(b.lat);
  double dphi = phi2 - phi1;
  double dlambda = radians(b.lon - a.lon);
  double h = std::sin(dphi / 2) * std::sin(dphi / 2) +
             std::cos(phi1) * std::cos(phi2) * std::sin(dlambda / 2) *
                 std::sin(dlambda / 2);
  return 2 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

GeoRecord grid_snap(const GeoRecord& r, double cell_m) {
  validate(r);
  if (!(cell_m > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "grid cell must be positive");
  }
  GeoRecord out = r;
  out.lat = snap_axis(r.lat * kMetersPerDegree, cell_m, 90.0 * kMetersPerDegree) /
            kMetersPerDegree;
  double scale = kMetersPerDegree * std::cos(radians(out.lat));
  if (scale < 1e-6) {
    out.lon = 0.0;
  } else {
    out.lon = snap_axis(r.lon * scale, cell_m, 180.0 * scale) / scale;
  }
  out.steps.push_back({GeneralizationKind::kGrid, cell_m});
  return out;
}

GeoRecord perturb(const GeoRecord& r, ByteView key, double max_m) {
  validate(r);
  if (!(max_m >= 0)) {
    throw Error(ErrorCode::kInvalidArgument, "perturbation bound must be >= 0");
  }
  GeoRecord out = r;
  out.steps.push_back({GeneralizationKind::kPerturbed, max_m});
  if (max_m == 0) return out;

  Bytes where;
  put_f64(where, r.lat);
  put_f64(where, r.lon);
  auto u = keyed_uniforms<2>(key, "beeptrace/perturb", where);
  // Slightly under max_m so the spherical distance stays within the bound.
  double radius = max_m * std::sqrt(u[0]) * (1.0 - 1e-6);
  double theta = 2 * kPi * u[1];
  double cos_lat = std::max(std::cos(radians(r.lat)), 1e-9);
  out.lat = clamp_lat(r.lat + radius * std::cos(theta) / kMetersPerDegree);
  out.lon = wrap_lon(r.lon + radius * std::sin(theta) / (kMetersPerDegree * cos_lat));
  return out;
}

GeoRecord datum_shift(const GeoRecord& r, ByteView key, const DatumShiftParams& params) {
  validate(r);
  ShiftField field(key, params);
  auto [lat, lon] = field.apply(r.lat, r.lon);
  GeoRecord out = r;
  out.lat = clamp_lat(lat);
  out.lon = wrap_lon(lon);
  out.steps.push_back({GeneralizationKind::kShifted, 0.0});
  return out;
}

GeoRecord datum_shift_inverse(const GeoRecord& r, ByteView key,
                              const DatumShiftParams& params) {
  validate(r);
  ShiftField field(key, params);
  double lat = r.lat, lon = r.lon;
  for (int iter = 0; iter < 200; ++iter) {
    auto [flat, flon] = field.apply(lat, lon);
    double err_lat = flat - r.lat;
    double err_lon = wrap_lon(flon - r.lon);
    lat -= err_lat;
    lon -= err_lon;
    if (std::abs(err_lat) < 1e-13 && std::abs(err_lon) < 1e-13) break;
  }
  GeoRecord out = r;
  out.lat = clamp_lat(lat);
  out.lon = wrap_lon(lon);
  if (!out.steps.empty() && out.steps.back().kind == GeneralizationKind::kShifted) {
    out.steps.pop_back();
  }
  return out;
}

namespace {

struct Position {
  bool defined = false;
  double lat = 0, lon = 0;
};

// Position of the trace at time t; defined at samples and inside segments no
// longer than max_gap.
Position position_at(const std::vector<GeoRecord>& trace, double t, double max_gap) {
  auto it = std::upper_bound(trace.begin(), trace.end(), t,
                             [](double v, const GeoRecord& r) { return v < r.timestamp; });
  if (it == trace.begin()) return {};
  const GeoRecord& lo = *(it - 1);
  if (static_cast<double>(lo.timestamp) == t) return {true, lo.lat, lo.lon};
  if (it == trace.end()) return {};
  const GeoRecord& hi = *it;
  double gap = static_cast<double>(hi.timestamp - lo.timestamp);
  if (gap > max_gap) return {};
  double s = (t - lo.timestamp) / gap;
  return {true, lo.lat + s * (hi.lat - lo.lat), lo.lon + s * (hi.lon - lo.lon)};
}

// True when the trace is defined on the whole open interval (u, v), where no
// sample of the trace lies strictly inside (u, v).
bool defined_between(const std::vector<GeoRecord>& trace, double u, double v,
                     double max_gap) {
  auto it = std::upper_bound(trace.begin(), trace.end(), u,
                             [](double x, const GeoRecord& r) { return x < r.timestamp; });
  if (it == trace.begin() || it == trace.end()) return false;
  const GeoRecord& lo = *(it - 1);
  const GeoRecord& hi = *it;
  return hi.timestamp >= v && static_cast<double>(hi.timestamp - lo.timestamp) <= max_gap;
}

void check_sorted(const std::vector<GeoRecord>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].timestamp <= trace[i - 1].timestamp) {
      throw Error(ErrorCode::kUnsortedTrace,
                  "trace timestamps must be strictly increasing at index " +
                      std::to_string(i));
    }
  }
}

}  // namespace

std::vector<ContactEvent> colocation(const std::vector<GeoRecord>& a,
                                     const std::vector<GeoRecord>& b, double radius_m,
                                     double max_gap_s) {
  check_sorted(a);
  check_sorted(b);
  std::vector<ContactEvent> events;
  if (a.empty() || b.empty()) return events;
  const double lo = static_cast<double>(std::max(a.front().timestamp, b.front().timestamp));
  const double hi = static_cast<double>(std::min(a.back().timestamp, b.back().timestamp));
  if (lo > hi) return events;

  // One fixed equirectangular projection for the whole pair keeps point and
  // interval evaluations consistent at shared breakpoints.
  const double ref_lat = 0.5 * (a.front().lat + b.front().lat);
  const double kx = kMetersPerDegree * std::cos(radians(ref_lat));
  const double ky = kMetersPerDegree;
  const double r2 = radius_m * radius_m;

  // Every position in [lo, hi] interpolates samples from the bracketing range,
  // so a bbox separation beyond the radius rules the pair out.
  struct Box {
    double lat0 = 90, lat1 = -90, lon0 = 180, lon1 = -180;
  };
  auto box_of = [&](const std::vector<GeoRecord>& tr) {
    auto first = std::lower_bound(tr.begin(), tr.end(), lo,
                                  [](const GeoRecord& r, double v) { return r.timestamp < v; });
    auto last = std::upper_bound(first, tr.end(), hi,
                                 [](double v, const GeoRecord& r) { return v < r.timestamp; });
    if (first != tr.begin()) --first;
    if (last != tr.end()) ++last;
    Box box;
    for (auto it = first; it != last; ++it) {
      box.lat0 = std::min(box.lat0, it->lat);
      box.lat1 = std::max(box.lat1, it->lat);
      box.lon0 = std::min(box.lon0, it->lon);
      box.lon1 = std::max(box.lon1, it->lon);
    }
    return box;
  };
  const Box ba = box_of(a), bb = box_of(b);
  const double gx = std::max({0.0, ba.lon0 - bb.lon1, bb.lon0 - ba.lon1}) * kx;
  const double gy = std::max({0.0, ba.lat0 - bb.lat1, bb.lat0 - ba.lat1}) * ky;
  if (gx * gx + gy * gy > r2) return events;

  std::vector<double> times;
  for (const auto* trace : {&a, &b}) {
    for (const GeoRecord& r : *trace) {
      double t = static_cast<double>(r.timestamp);
      if (t >= lo && t <= hi) times.push_back(t);
    }
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  auto relative = [&](double t, double& dx, double& dy) {
    Position pa = position_at(a, t, max_gap_s);
    Position pb = position_at(b, t, max_gap_s);
    if (!pa.defined || !pb.defined) return false;
    dx = (pa.lon - pb.lon) * kx;
    dy = (pa.lat - pb.lat) * ky;
    return true;
  };

  bool open = false;
  ContactEvent current;
  auto emit = [&](double start, double end, double dist) {
    if (open && current.end == start) {
      current.end = end;
      current.min_distance_m = std::min(current.min_distance_m, dist);
      return;
    }
    if (open) events.push_back(current);
    current = ContactEvent{{}, start, end, dist};
    open = true;
  };

  for (std::size_t i = 0; i < times.size(); ++i) {
    const double u = times[i];
    double x0, y0;
    const bool at_u = relative(u, x0, y0);
    if (at_u && x0 * x0 + y0 * y0 <= r2) emit(u, u, std::hypot(x0, y0));

    if (i + 1 == times.size()) break;
    const double v = times[i + 1];
    if (!at_u || !defined_between(a, u, v, max_gap_s) ||
        !defined_between(b, u, v, max_gap_s)) {
      continue;
    }
    double x1, y1;
    if (!relative(v, x1, y1)) continue;
    const double wx = x1 - x0, wy = y1 - y0;
    const double qa = wx * wx + wy * wy;
    const double qb = 2 * (x0 * wx + y0 * wy);
    const double qc = x0 * x0 + y0 * y0 - r2;
    double s1, s2;
    if (qa == 0) {
      if (qc > 0) continue;
      s1 = 0;
      s2 = 1;
    } else {
      double disc = qb * qb - 4 * qa * qc;
      if (disc < 0) continue;
      double sq = std::sqrt(disc);
      s1 = std::max(0.0, (-qb - sq) / (2 * qa));
      s2 = std::min(1.0, (-qb + sq) / (2 * qa));
      if (qc <= 0) s1 = 0;
      if (x1 * x1 + y1 * y1 <= r2) s2 = 1;
      if (s1 > s2) continue;
    }
    double s_min = qa == 0 ? 0.0 : std::clamp(-qb / (2 * qa), s1, s2);
    double dist = std::hypot(x0 + s_min * wx, y0 + s_min * wy);
    double start = s1 == 0 ? u : u + s1 * (v - u);
    double end = s2 == 1 ? v : u + s2 * (v - u);
    emit(start, end, dist);
  }
  if (open) events.push_back(current);
  return events;
}

Bytes serialize_record(const GeoRecord& r) {
  Bytes out;
  put_f64(out, r.lat);
  put_f64(out, r.lon);
  put_i64(out, r.timestamp);
  put_u8(out, static_cast<std::uint8_t>(r.steps.size()));
  for (const Generalization& g : r.steps) {
    put_u8(out, static_cast<std::uint8_t>(g.kind));
    put_f64(out, g.param);
  }
  return out;
}

GeoRecord parse_record(ByteView data) {
  ByteReader in(data);
  GeoRecord r;
  r.lat = in.f64();
  r.lon = in.f64();
  r.timestamp = in.i64();
  std::uint8_t n = in.u8();
  for (std::uint8_t i = 0; i < n; ++i) {
    std::uint8_t kind = in.u8();
    if (kind < 1 || kind > 3) {
      throw Error(ErrorCode::kCorruptCiphertext, "unknown generalization kind");
    }
    r.steps.push_back({static_cast<GeneralizationKind>(kind), in.f64()});
  }
  if (in.remaining() != 0) {
    throw Error(ErrorCode::kCorruptCiphertext, "trailing bytes after record");
  }
  return r;
}

std::map<std::string, std::vector<GeoRecord>> read_trace_csv(std::istream& in) {
  std::map<std::string, std::vector<GeoRecord>> traces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("user_id", 0) == 0) continue;
    std::stringstream ss(line);
    std::string user, lat, lon, ts;
    if (!std::getline(ss, user, ',') || !std::getline(ss, lat, ',') ||
        !std::getline(ss, lon, ',') || !std::getline(ss, ts, ',')) {
      throw Error(ErrorCode::kConfigError,
                  "trace csv line " + std::to_string(line_no) + ": expected 4 fields");
    }
    GeoRecord r;
    try {
      r.lat = std::stod(lat);
      r.lon = std::stod(lon);
      r.timestamp = std::stoll(ts);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfigError,
                  "trace csv line " + std::to_string(line_no) + ": bad number");
    }
    validate(r);
    traces[user].push_back(r);
  }
  for (auto& [user, trace] : traces) {
    std::sort(trace.begin(), trace.end(),
              [](const GeoRecord& x, const GeoRecord& y) { return x.timestamp < y.timestamp; });
    trace.erase(std::unique(trace.begin(), trace.end(),
                            [](const GeoRecord& x, const GeoRecord& y) {
                              return x.timestamp == y.timestamp;
                            }),
                trace.end());
  }
  return traces;
}

}  // namespace beeptrace
