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

#include "calrec/synthetic.hpp"

#include <cmath>
#include <sstream>

#include "calrec/error.hpp"
#include "calrec/math.hpp"

namespace calrec {

RawInteractions generate_interactions(const SyntheticConfig& cfg) {
  if (cfg.num_users == 0 || cfg.num_items == 0 || cfg.rank == 0) {
    throw ValidationError("synthetic data needs users, items and rank >= 1");
  }
  if (!(cfg.density > 0 && cfg.density < 1)) {
    throw ValidationError("synthetic density must lie in (0, 1)");
  }
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> users(cfg.num_users * cfg.rank);
  std::vector<double> items(cfg.num_items * cfg.rank);
  std::vector<double> pop(cfg.num_items);
  for (double& v : users) v = normal(rng);
  for (double& v : items) v = normal(rng);
  for (double& v : pop) v = cfg.popularity_skew * normal(rng);

  const double norm = cfg.scale / std::sqrt(static_cast<double>(cfg.rank));
  std::vector<double> logits(cfg.num_users * cfg.num_items);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
      double dot = 0.0;
      for (std::size_t r = 0; r < cfg.rank; ++r) {
        dot += users[u * cfg.rank + r] * items[i * cfg.rank + r];
      }
      logits[u * cfg.num_items + i] = norm * dot + pop[i];
    }
  }
  auto mean_prob = [&](double offset) {
    double sum = 0.0;
    for (double z : logits) sum += sigmoid(z + offset);
    return sum / static_cast<double>(logits.size());
  };
  double lo = -50.0;
  double hi = 50.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_prob(mid) < cfg.density ? lo : hi) = mid;
  }
  const double offset = 0.5 * (lo + hi);

  RawInteractions raw;
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    raw.users.intern("u" + std::to_string(u));
  }
  for (std::size_t i = 0; i < cfg.num_items; ++i) {
    raw.items.intern("i" + std::to_string(i));
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
      if (unit(rng) < sigmoid(logits[u * cfg.num_items + i] + offset)) {
        raw.interactions.push_back(
            {static_cast<UserId>(u), static_cast<ItemId>(i)});
      }
    }
  }
  if (raw.interactions.empty()) {
    throw ValidationError("synthetic generator produced no interactions");
  }
  return raw;
}

std::string to_csv(const RawInteractions& raw, char delimiter) {
  std::ostringstream out;
  for (const auto& x : raw.interactions) {
    out << raw.users.id_of(x.user) << delimiter << raw.items.id_of(x.item)
        << '\n';
  }
  return out.str();
}

}  // namespace calrec
