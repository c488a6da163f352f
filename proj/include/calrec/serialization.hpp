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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "calrec/calibration.hpp"
#include "calrec/dataset.hpp"
#include "calrec/metrics.hpp"
#include "calrec/perk.hpp"
#include "calrec/ranker.hpp"

namespace calrec {

using Json = nlohmann::ordered_json;

// Ranker checkpoint: a JSON header at `header_path` and a sidecar binary
// file next to it holding little-endian float32 arrays user_emb, item_emb,
// item_bias (row-major, in that order). The header records each array's
// byte length and the sidecar's file name.
struct CheckpointMeta {
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::kBpr;
  int epochs_completed = 0;
};

struct Checkpoint {
  MfParams params;
  CheckpointMeta meta;
};

void save_checkpoint(const std::filesystem::path& header_path,
                     const MfParams& params, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& header_path);

// Parameters as stored: every entry rounded to float32.
MfParams round_to_float(const MfParams& params);

Json calibrator_to_json(const Calibrator& cal);
Calibrator calibrator_from_json(const Json& j);
void save_calibrator(const std::filesystem::path& path, const Calibrator& cal);
Calibrator load_calibrator(const std::filesystem::path& path);

// Dataset bundle directory: users.json and items.json (external ids in index
// order) plus train.csv, validation.csv, test.csv with `user,item` index
// pairs.
inline constexpr const char* kBundleFiles[] = {
    "users.json", "items.json", "train.csv", "validation.csv", "test.csv"};

struct Bundle {
  IdMap users;
  IdMap items;
  Dataset dataset;
};

void save_bundle(const std::filesystem::path& dir, const IdMap& users,
                 const IdMap& items, const Dataset& dataset);
Bundle load_bundle(const std::filesystem::path& dir);

// One JSON object per line.
Json fixed_row_to_json(UserId user, std::span<const ItemId> items);
Json cut_to_json(const PersonalizedCut& cut);

// A parsed recommendation row; `curve` and `k_star` only for cuts.
struct RecommendationRow {
  UserId user = 0;
  std::vector<ItemId> items;
  std::optional<std::size_t> k_star;
  std::vector<double> curve;
};

RecommendationRow row_from_json(const Json& j);
std::vector<RecommendationRow> load_recommendations(
    const std::filesystem::path& path);

void write_reliability_csv(const std::filesystem::path& path,
                           std::span<const ReliabilityRow> rows);
std::vector<ReliabilityRow> read_reliability_csv(
    const std::filesystem::path& path);

Json eval_result_to_json(const EvalResult& result);

void write_text(const std::filesystem::path& path, const std::string& text);
void append_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

}  // namespace calrec
