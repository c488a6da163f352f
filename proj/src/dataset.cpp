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

#include "calrec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "calrec/error.hpp"

namespace calrec {

IdMap::IdMap(std::vector<std::string> ids) {
  for (auto& id : ids) {
    if (index_.count(id) != 0) {
      throw ValidationError("duplicate id in id map: " + id);
    }
    index_.emplace(id, static_cast<std::uint32_t>(ids_.size()));
    ids_.push_back(std::move(id));
  }
}

std::uint32_t IdMap::intern(const std::string& id) {
  auto [it, inserted] =
      index_.emplace(id, static_cast<std::uint32_t>(ids_.size()));
  if (inserted) ids_.push_back(id);
  return it->second;
}

std::uint32_t IdMap::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown id: " + id);
  return it->second;
}

bool IdMap::contains(const std::string& id) const {
  return index_.count(id) != 0;
}

const std::string& IdMap::id_of(std::uint32_t index) const {
  if (index >= ids_.size()) {
    throw ValidationError("index out of range: " + std::to_string(index));
  }
  return ids_[index];
}

namespace {

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto begin = s.find_first_not_of(ws);
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(ws);
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return fields;
}

struct PairHash {
  std::size_t operator()(const Interaction& x) const {
    return std::hash<std::uint64_t>()(
        (static_cast<std::uint64_t>(x.user) << 32) | x.item);
  }
};

}  // namespace

RawInteractions parse_interactions(std::string_view text,
                                   const LoadOptions& options,
                                   RawInteractions seed_maps) {
  RawInteractions raw;
  raw.users = std::move(seed_maps.users);
  raw.items = std::move(seed_maps.items);
  std::unordered_set<Interaction, PairHash> seen;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    auto fields = split_fields(line, options.delimiter);
    if (fields.size() < 2 || fields.size() > 3) {
      throw ParseError(line_no, "expected 2 or 3 fields, got " +
                                    std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError(line_no, "empty user or item id");
    }
    Interaction x{raw.users.intern(std::string(fields[0])),
                  raw.items.intern(std::string(fields[1]))};
    if (seen.insert(x).second) raw.interactions.push_back(x);
  }
  if (raw.interactions.empty()) throw ValidationError("no interactions in input");
  return raw;
}

RawInteractions load_interactions(const std::filesystem::path& path,
                                  const LoadOptions& options,
                                  RawInteractions seed_maps) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return parse_interactions(buffer.str(), options, std::move(seed_maps));
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw ValidationError("unknown split: " + name);
}

Dataset::Dataset(std::size_t num_users, std::size_t num_items,
                 std::vector<Interaction> train,
                 std::vector<Interaction> validation,
                 std::vector<Interaction> test)
    : num_users_(num_users),
      num_items_(num_items),
      train_(std::move(train)),
      validation_(std::move(validation)),
      test_(std::move(test)),
      item_popularity_(num_items, 0) {
  if (num_users == 0 || num_items == 0) {
    throw ValidationError("dataset needs at least one user and one item");
  }
  const std::vector<Interaction>* splits[3] = {&train_, &validation_, &test_};
  std::unordered_set<Interaction, PairHash> seen;
  for (int s = 0; s < 3; ++s) {
    by_user_[s].assign(num_users, {});
    for (const auto& x : *splits[s]) {
      if (x.user >= num_users || x.item >= num_items) {
        throw ValidationError("interaction (" + std::to_string(x.user) + "," +
                              std::to_string(x.item) + ") out of range");
      }
      if (!seen.insert(x).second) {
        throw ValidationError("pair (" + std::to_string(x.user) + "," +
                              std::to_string(x.item) +
                              ") repeated within or across splits");
      }
      by_user_[s][x.user].push_back(x.item);
    }
    for (auto& items : by_user_[s]) std::sort(items.begin(), items.end());
  }
  for (const auto& x : train_) ++item_popularity_[x.item];
}

const std::vector<Interaction>& Dataset::interactions(Split split) const {
  switch (split) {
    case Split::kTrain:
      return train_;
    case Split::kValidation:
      return validation_;
    case Split::kTest:
      return test_;
  }
  return train_;
}

std::span<const ItemId> Dataset::user_items(Split split, UserId user) const {
  if (user >= num_users_) {
    throw ValidationError("user index out of range: " + std::to_string(user));
  }
  return by_user_[static_cast<int>(split)][user];
}

bool Dataset::contains(Split split, UserId user, ItemId item) const {
  auto items = user_items(split, user);
  return std::binary_search(items.begin(), items.end(), item);
}

bool Dataset::observed(UserId user, ItemId item) const {
  return contains(Split::kTrain, user, item) ||
         contains(Split::kValidation, user, item) ||
         contains(Split::kTest, user, item);
}

Dataset split_per_user(const RawInteractions& raw, const SplitRatios& ratios,
                       std::uint64_t seed) {
  if (raw.interactions.empty()) {
    throw ValidationError("cannot split an empty interaction list");
  }
  if (!(ratios.train > 0 && ratios.validation > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be positive and sum to 1");
  }
  std::size_t num_users = raw.users.size();
  std::size_t num_items = raw.items.size();
  for (const auto& x : raw.interactions) {
    num_users = std::max<std::size_t>(num_users, x.user + 1);
    num_items = std::max<std::size_t>(num_items, x.item + 1);
  }

  std::vector<std::vector<ItemId>> per_user(num_users);
  for (const auto& x : raw.interactions) per_user[x.user].push_back(x.item);

  Rng rng(seed);
  std::vector<Interaction> train, validation, test;
  for (UserId u = 0; u < num_users; ++u) {
    auto& items = per_user[u];
    const std::size_t n = items.size();
    if (n < 3) {
      for (ItemId i : items) train.push_back({u, i});
      continue;
    }
    std::shuffle(items.begin(), items.end(), rng);
    auto n_val = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * ratios.validation));
    auto n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * ratios.test));
    while (n_val + n_test >= n) {
      if (n_test >= n_val && n_test > 0) {
        --n_test;
      } else {
        --n_val;
      }
    }
    const std::size_t n_train = n - n_val - n_test;
    for (std::size_t k = 0; k < n; ++k) {
      Interaction x{u, items[k]};
      if (k < n_train) {
        train.push_back(x);
      } else if (k < n_train + n_val) {
        validation.push_back(x);
      } else {
        test.push_back(x);
      }
    }
  }
  return Dataset(num_users, num_items, std::move(train), std::move(validation),
                 std::move(test));
}

ItemId sample_excluding(std::size_t num_items,
                        std::span<const std::span<const ItemId>> excluded,
                        Rng& rng) {
  auto is_excluded = [&](ItemId item) {
    for (auto list : excluded) {
      if (std::binary_search(list.begin(), list.end(), item)) return true;
    }
    return false;
  };
  std::size_t total = 0;
  for (auto list : excluded) total += list.size();

  if (2 * total < num_items) {
    std::uniform_int_distribution<ItemId> pick(
        0, static_cast<ItemId>(num_items - 1));
    while (true) {
      ItemId item = pick(rng);
      if (!is_excluded(item)) return item;
    }
  }
  std::vector<ItemId> candidates;
  for (ItemId i = 0; i < num_items; ++i) {
    if (!is_excluded(i)) candidates.push_back(i);
  }
  if (candidates.empty()) {
    throw ValidationError("no candidate items left to sample");
  }
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return candidates[pick(rng)];
}

ItemId sample_negative(const Dataset& dataset, UserId user, Rng& rng) {
  std::span<const ItemId> lists[] = {dataset.user_items(Split::kTrain, user)};
  try {
    return sample_excluding(dataset.num_items(), lists, rng);
  } catch (const ValidationError&) {
    throw ValidationError("user " + std::to_string(user) +
                          " has interacted with every item; no negative left");
  }
}

ItemId sample_unobserved(const Dataset& dataset, UserId user, Rng& rng) {
  std::span<const ItemId> lists[] = {
      dataset.user_items(Split::kTrain, user),
      dataset.user_items(Split::kValidation, user),
      dataset.user_items(Split::kTest, user)};
  try {
    return sample_excluding(dataset.num_items(), lists, rng);
  } catch (const ValidationError&) {
    throw ValidationError("user " + std::to_string(user) +
                          " has no unobserved item left");
  }
}

}  // namespace calrec
