// Copyright 2026 The calrec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calrec/dataset.hpp"

namespace calrec {

// Low-rank implicit-feedback generator. Each (u, i) is observed with
// probability sigmoid(scale * <x_u, y_i> / sqrt(rank) + pop_i + offset),
// x and y standard normal, pop_i a log-normal popularity effect of spread
// `popularity_skew`; `offset` is solved so the expected density matches
// `density`.
struct SyntheticConfig {
  std::size_t num_users = 200;
  std::size_t num_items = 300;
  std::size_t rank = 2;
  double scale = 4.0;
  double popularity_skew = 0.0;
  double density = 0.08;
  std::uint64_t seed = 1;
};

// Ids are "u<index>" and "i<index>".
RawInteractions generate_interactions(const SyntheticConfig& cfg);

// Same data as delimiter-separated `user,item` lines.
std::string to_csv(const RawInteractions& raw, char delimiter = ',');

}  // namespace calrec
