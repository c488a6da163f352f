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
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "calrec/random.hpp"

namespace calrec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

struct Interaction {
  UserId user = 0;
  ItemId item = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

// Bidirectional map between external string ids and dense 0-based indices.
class IdMap {
 public:
  IdMap() = default;
  explicit IdMap(std::vector<std::string> ids);

  // Returns the index of `id`, assigning the next free index if unseen.
  std::uint32_t intern(const std::string& id);
  // Throws ValidationError for unknown ids.
  std::uint32_t index_of(const std::string& id) const;
  bool contains(const std::string& id) const;
  const std::string& id_of(std::uint32_t index) const;

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct RawInteractions {
  std::vector<Interaction> interactions;  // deduplicated, first-seen order
  IdMap users;
  IdMap items;
};

struct LoadOptions {
  char delimiter = ',';
};

// Reads `user_id<delim>item_id[<delim>timestamp]` lines. Blank lines are
// skipped, timestamps ignored and repeated pairs collapsed. Pass existing
// maps in `seed_maps` to extend them instead of starting fresh.
RawInteractions load_interactions(const std::filesystem::path& path,
                                  const LoadOptions& options = {},
                                  RawInteractions seed_maps = {});
RawInteractions parse_interactions(std::string_view text,
                                   const LoadOptions& options = {},
                                   RawInteractions seed_maps = {});

enum class Split { kTrain, kValidation, kTest };

const char* split_name(Split split);
Split parse_split(const std::string& name);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

// Immutable user-item interaction data partitioned into three disjoint
// splits. Per-user item lists are kept sorted for membership queries.
class Dataset {
 public:
  // Validates ranges, disjointness and duplicates.
  Dataset(std::size_t num_users, std::size_t num_items,
          std::vector<Interaction> train, std::vector<Interaction> validation,
          std::vector<Interaction> test);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }

  const std::vector<Interaction>& interactions(Split split) const;
  const std::vector<Interaction>& train() const { return train_; }
  const std::vector<Interaction>& validation() const { return validation_; }
  const std::vector<Interaction>& test() const { return test_; }

  // Sorted items of `user` in `split`.
  std::span<const ItemId> user_items(Split split, UserId user) const;
  bool contains(Split split, UserId user, ItemId item) const;
  // True if (user, item) appears in any split.
  bool observed(UserId user, ItemId item) const;

  const std::vector<std::uint32_t>& item_popularity() const {
    return item_popularity_;
  }

 private:
  std::size_t num_users_;
  std::size_t num_items_;
  std::vector<Interaction> train_;
  std::vector<Interaction> validation_;
  std::vector<Interaction> test_;
  std::vector<std::vector<ItemId>> by_user_[3];
  std::vector<std::uint32_t> item_popularity_;
};

// Per-user random holdout. Users with fewer than three interactions keep
// everything in train; every other user keeps at least one train item.
Dataset split_per_user(const RawInteractions& raw, const SplitRatios& ratios,
                       std::uint64_t seed);

// Uniform item outside the user's train set.
ItemId sample_negative(const Dataset& dataset, UserId user, Rng& rng);

// Uniform item outside every list in `excluded` (each sorted).
ItemId sample_excluding(std::size_t num_items,
                        std::span<const std::span<const ItemId>> excluded,
                        Rng& rng);

// Uniform item the user has not interacted with in any split.
ItemId sample_unobserved(const Dataset& dataset, UserId user, Rng& rng);

}  // namespace calrec
