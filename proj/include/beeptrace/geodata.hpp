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
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "beeptrace/bytes.hpp"

namespace beeptrace {

inline constexpr double kEarthRadiusM = 6'371'000.0;

enum class GeneralizationKind : std::uint8_t {
  kGrid = 1,       // param: cell size in meters
  kPerturbed = 2,  // param: maximum displacement in meters
  kShifted = 3,    // param unused
};

struct Generalization {
  GeneralizationKind kind;
  double param = 0.0;

  friend bool operator==(const Generalization&, const Generalization&) = default;
};

// A timestamped WGS84 sample. `steps` lists every generalization applied, in
// order; an empty list is raw data.
struct GeoRecord {
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t timestamp = 0;
  std::vector<Generalization> steps;

  bool is_raw() const { return steps.empty(); }

  friend bool operator==(const GeoRecord&, const GeoRecord&) = default;
};

struct ContactEvent {
  Bytes pseudonym_prefix;
  double start = 0.0;
  double end = 0.0;
  double min_distance_m = 0.0;

  double duration() const { return end - start; }
};

// Throws Error(kInvalidCoordinate) when out of the WGS84 ranges.
void validate(const GeoRecord& r);

// Great-circle distance on a sphere of radius kEarthRadiusM.
double haversine_distance(const GeoRecord& a, const GeoRecord& b);

// Snaps to a cell_m grid in a local equirectangular projection. Idempotent.
GeoRecord grid_snap(const GeoRecord& r, double cell_m);

// Keyed, deterministic displacement of at most max_m meters. The displacement
// depends only on (key, lat, lon) so repeated samples at one place coincide.
GeoRecord perturb(const GeoRecord& r, ByteView key, double max_m);

struct DatumShiftParams {
  double min_offset_m = 200.0;
  double max_offset_m = 400.0;
  double amplitude_m = 60.0;
  double wavelength_m = 20'000.0;
};

// Keyed smooth coordinate transform: a constant offset plus a low-amplitude
// long-wavelength warp. Local distances are preserved to within a few percent.
GeoRecord datum_shift(const GeoRecord& r, ByteView key,
                      const DatumShiftParams& params = {});

// Inverse of datum_shift by fixed-point iteration (converges to ~1e-12 deg).
GeoRecord datum_shift_inverse(const GeoRecord& r, ByteView key,
                              const DatumShiftParams& params = {});

inline constexpr double kDefaultMaxGapS = 3600.0;

// Maximal time intervals during which the linearly interpolated positions of
// the two traces are within radius_m. Interpolation never bridges a gap longer
// than max_gap_s. Traces must be sorted by timestamp (Error(kUnsortedTrace)).
// Returned events are disjoint and time-sorted; pseudonym_prefix is left empty.
std::vector<ContactEvent> colocation(const std::vector<GeoRecord>& a,
                                     const std::vector<GeoRecord>& b,
                                     double radius_m,
                                     double max_gap_s = kDefaultMaxGapS);

// Plaintext wire form used inside geodata envelopes.
Bytes serialize_record(const GeoRecord& r);
GeoRecord parse_record(ByteView data);

// CSV with header `user_id,lat,lon,timestamp`. Records are grouped per user and
// sorted by time.
std::map<std::string, std::vector<GeoRecord>> read_trace_csv(std::istream& in);

}  // namespace beeptrace
