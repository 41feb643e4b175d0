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

#include <array>
#include <boost/math/distributions/chi_squared.hpp>
#include <cstdint>
#include <utility>
#include <vector>

namespace stats {

// Pearson chi-squared independence test on a 16x16 table of (high nibble of
// x, high nibble of y). Returns the p-value.
inline double nibble_independence(const std::vector<std::pair<std::uint8_t, std::uint8_t>>& pairs) {
  std::array<std::array<double, 16>, 16> table{};
  std::array<double, 16> rows{}, cols{};
  for (auto [x, y] : pairs) {
    table[x >> 4][y >> 4] += 1;
    rows[x >> 4] += 1;
    cols[y >> 4] += 1;
  }
  const double n = static_cast<double>(pairs.size());
  double chi2 = 0;
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) {
      const double expected = rows[i] * cols[j] / n;
      if (expected > 0) chi2 += (table[i][j] - expected) * (table[i][j] - expected) / expected;
    }
  }
  boost::math::chi_squared dist(15.0 * 15.0);
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

// Goodness of fit of byte values against the uniform distribution.
inline double byte_uniformity(const std::vector<std::uint8_t>& bytes) {
  std::array<double, 256> counts{};
  for (auto b : bytes) counts[b] += 1;
  const double expected = static_cast<double>(bytes.size()) / 256.0;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared dist(255.0);
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

}  // namespace stats
