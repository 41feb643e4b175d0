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
#include <cstdint>
#include <random>
#include <span>

namespace beeptrace {

// Deterministic generator shared by every stochastic choice in a simulation.
// Distributions are implemented here rather than via <random> so that streams
// are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  void fill(std::span<std::uint8_t> out);

  template <std::size_t N>
  std::array<std::uint8_t, N> bytes() {
    std::array<std::uint8_t, N> a{};
    fill(a);
    return a;
  }

  // Independent child stream, e.g. one per agent.
  Rng fork(std::uint64_t stream_id) const;

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_material_ = engine_();
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace beeptrace
