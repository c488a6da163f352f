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

#include "calrec/serialization.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "calrec/error.hpp"

namespace calrec {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("error writing " + path.string());
}

void append_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << text;
  if (!out) throw IoError("error writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

namespace {

template <typename T>
T get_field(const Json& j, const char* key, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(context + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(context + ": bad field '" + key + "': " + e.what());
  }
}

void put_f32(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
}

double get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return static_cast<double>(std::bit_cast<float>(bits));
}

fs::path sidecar_path(const fs::path& header_path) {
  fs::path bin = header_path;
  bin.replace_extension(".bin");
  return bin;
}

}  // namespace

MfParams round_to_float(const MfParams& params) {
  MfParams out = params;
  auto round = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  out.user_emb = out.user_emb.unaryExpr(round);
  out.item_emb = out.item_emb.unaryExpr(round);
  out.item_bias = out.item_bias.unaryExpr(round);
  return out;
}

void save_checkpoint(const fs::path& header_path, const MfParams& params,
                     const CheckpointMeta& meta) {
  std::string blob;
  const std::size_t user_bytes = 4 * params.user_emb.size();
  const std::size_t item_bytes = 4 * params.item_emb.size();
  const std::size_t bias_bytes = 4 * params.item_bias.size();
  blob.reserve(user_bytes + item_bytes + bias_bytes);
  for (Eigen::Index k = 0; k < params.user_emb.size(); ++k) {
    put_f32(blob, params.user_emb.data()[k]);
  }
  for (Eigen::Index k = 0; k < params.item_emb.size(); ++k) {
    put_f32(blob, params.item_emb.data()[k]);
  }
  for (Eigen::Index k = 0; k < params.item_bias.size(); ++k) {
    put_f32(blob, params.item_bias[k]);
  }
  const fs::path bin = sidecar_path(header_path);
  Json header;
  header["format"] = "calrec-mf-v1";
  header["num_users"] = params.num_users();
  header["num_items"] = params.num_items();
  header["dim"] = params.dim();
  header["seed"] = meta.seed;
  header["loss_kind"] = loss_kind_name(meta.loss_kind);
  header["epochs_completed"] = meta.epochs_completed;
  header["data_file"] = bin.filename().string();
  header["user_emb_bytes"] = user_bytes;
  header["item_emb_bytes"] = item_bytes;
  header["item_bias_bytes"] = bias_bytes;
  write_text(bin, blob);
  write_text(header_path, header.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& header_path) {
  const Json header = read_json(header_path);
  const std::string ctx = header_path.string();
  const auto users = get_field<std::size_t>(header, "num_users", ctx);
  const auto items = get_field<std::size_t>(header, "num_items", ctx);
  const auto dim = get_field<std::size_t>(header, "dim", ctx);
  const auto user_bytes = get_field<std::size_t>(header, "user_emb_bytes", ctx);
  const auto item_bytes = get_field<std::size_t>(header, "item_emb_bytes", ctx);
  const auto bias_bytes = get_field<std::size_t>(header, "item_bias_bytes", ctx);
  if (user_bytes != 4 * users * dim || item_bytes != 4 * items * dim ||
      bias_bytes != 4 * items) {
    throw ValidationError(ctx + ": array byte lengths disagree with shapes");
  }
  Checkpoint ckpt;
  ckpt.meta.seed = get_field<std::uint64_t>(header, "seed", ctx);
  ckpt.meta.loss_kind =
      parse_loss_kind(get_field<std::string>(header, "loss_kind", ctx));
  ckpt.meta.epochs_completed =
      header.contains("epochs_completed")
          ? get_field<int>(header, "epochs_completed", ctx)
          : 0;
  const fs::path bin =
      header_path.parent_path() / get_field<std::string>(header, "data_file", ctx);
  const std::string blob = read_text(bin);
  if (blob.size() != user_bytes + item_bytes + bias_bytes) {
    throw ValidationError(bin.string() + ": expected " +
                          std::to_string(user_bytes + item_bytes + bias_bytes) +
                          " bytes, found " + std::to_string(blob.size()));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  auto& params = ckpt.params;
  params.user_emb.resize(static_cast<Eigen::Index>(users), static_cast<Eigen::Index>(dim));
  params.item_emb.resize(static_cast<Eigen::Index>(items), static_cast<Eigen::Index>(dim));
  params.item_bias.resize(static_cast<Eigen::Index>(items));
  for (Eigen::Index k = 0; k < params.user_emb.size(); ++k, p += 4) {
    params.user_emb.data()[k] = get_f32(p);
  }
  for (Eigen::Index k = 0; k < params.item_emb.size(); ++k, p += 4) {
    params.item_emb.data()[k] = get_f32(p);
  }
  for (Eigen::Index k = 0; k < params.item_bias.size(); ++k, p += 4) {
    params.item_bias[k] = get_f32(p);
  }
  if (!params.all_finite()) {
    throw ValidationError(ctx + ": checkpoint holds non-finite values");
  }
  return ckpt;
}

Json calibrator_to_json(const Calibrator& cal) {
  Json j;
  j["kind"] = calibrator_kind_name(cal.kind);
  j["a"] = cal.a;
  j["b"] = cal.b;
  j["c"] = cal.c;
  j["score_shift"] = cal.score_shift;
  if (cal.kind == CalibratorKind::kHistogram) {
    Json bins = Json::array();
    for (const auto& bin : cal.bins) {
      bins.push_back({{"upper_edge", bin.upper_edge}, {"value", bin.value}});
    }
    j["bins"] = std::move(bins);
  }
  return j;
}

Calibrator calibrator_from_json(const Json& j) {
  const std::string ctx = "calibrator";
  Calibrator cal;
  cal.kind = parse_calibrator_kind(get_field<std::string>(j, "kind", ctx));
  cal.a = get_field<double>(j, "a", ctx);
  cal.b = get_field<double>(j, "b", ctx);
  cal.c = get_field<double>(j, "c", ctx);
  cal.score_shift = j.contains("score_shift")
                        ? get_field<double>(j, "score_shift", ctx)
                        : 0.0;
  if (cal.kind == CalibratorKind::kHistogram) {
    const auto bins = get_field<Json>(j, "bins", ctx);
    if (!bins.is_array() || bins.empty()) {
      throw ValidationError("histogram calibrator needs a non-empty bins array");
    }
    for (const auto& bin : bins) {
      HistogramBin hb{get_field<double>(bin, "upper_edge", ctx),
                      get_field<double>(bin, "value", ctx)};
      if (!(hb.value >= 0 && hb.value <= 1)) {
        throw ValidationError("histogram bin value outside [0, 1]");
      }
      if (!cal.bins.empty() && !(hb.upper_edge > cal.bins.back().upper_edge)) {
        throw ValidationError("histogram edges must be strictly increasing");
      }
      cal.bins.push_back(hb);
    }
  }
  return cal;
}

void save_calibrator(const fs::path& path, const Calibrator& cal) {
  write_text(path, calibrator_to_json(cal).dump(2) + "\n");
}

Calibrator load_calibrator(const fs::path& path) {
  return calibrator_from_json(read_json(path));
}

namespace {

std::string pairs_csv(const std::vector<Interaction>& xs) {
  std::string out;
  for (const auto& x : xs) {
    out += std::to_string(x.user);
    out += ',';
    out += std::to_string(x.item);
    out += '\n';
  }
  return out;
}

std::uint32_t parse_index(std::string_view field, std::size_t line,
                          const std::string& file) {
  std::uint32_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ValidationError(file + ":" + std::to_string(line) +
                          ": not an index: '" + std::string(field) + "'");
  }
  return value;
}

std::vector<Interaction> read_pairs(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<Interaction> out;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": expected user,item");
    }
    std::string_view view(line);
    out.push_back({parse_index(view.substr(0, comma), line_no, path.string()),
                   parse_index(view.substr(comma + 1), line_no, path.string())});
  }
  return out;
}

}  // namespace

void save_bundle(const fs::path& dir, const IdMap& users, const IdMap& items,
                 const Dataset& dataset) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "users.json", Json(users.ids()).dump() + "\n");
  write_text(dir / "items.json", Json(items.ids()).dump() + "\n");
  write_text(dir / "train.csv", pairs_csv(dataset.train()));
  write_text(dir / "validation.csv", pairs_csv(dataset.validation()));
  write_text(dir / "test.csv", pairs_csv(dataset.test()));
}

Bundle load_bundle(const fs::path& dir) {
  auto read_ids = [&](const char* name) {
    const Json j = read_json(dir / name);
    try {
      return IdMap(j.get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError((dir / name).string() + ": " + e.what());
    }
  };
  IdMap users = read_ids("users.json");
  IdMap items = read_ids("items.json");
  Dataset dataset(users.size(), items.size(), read_pairs(dir / "train.csv"),
                  read_pairs(dir / "validation.csv"),
                  read_pairs(dir / "test.csv"));
  return {std::move(users), std::move(items), std::move(dataset)};
}

Json fixed_row_to_json(UserId user, std::span<const ItemId> items) {
  Json j;
  j["user"] = user;
  j["items"] = std::vector<ItemId>(items.begin(), items.end());
  return j;
}

Json cut_to_json(const PersonalizedCut& cut) {
  Json j;
  j["user"] = cut.user;
  j["k_star"] = cut.k_star;
  j["curve"] = cut.curve;
  j["items"] = cut.items;
  j["candidate_pool"] = cut.candidate_pool;
  return j;
}

RecommendationRow row_from_json(const Json& j) {
  const std::string ctx = "recommendation row";
  RecommendationRow row;
  row.user = get_field<UserId>(j, "user", ctx);
  row.items = get_field<std::vector<ItemId>>(j, "items", ctx);
  if (j.contains("k_star")) {
    row.k_star = get_field<std::size_t>(j, "k_star", ctx);
    row.curve = get_field<std::vector<double>>(j, "curve", ctx);
    if (*row.k_star < 1 || *row.k_star > row.curve.size()) {
      throw ValidationError("k_star outside the utility curve");
    }
  }
  return row;
}

std::vector<RecommendationRow> load_recommendations(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<RecommendationRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(row_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": " + e.what());
    }
  }
  return rows;
}

void write_reliability_csv(const fs::path& path,
                           std::span<const ReliabilityRow> rows) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "bin_lower,bin_upper,count,mean_p,frac_pos\n";
  for (const auto& row : rows) {
    out << row.bin_lower << ',' << row.bin_upper << ',' << row.count << ','
        << row.mean_p << ',' << row.frac_pos << '\n';
  }
  write_text(path, out.str());
}

std::vector<ReliabilityRow> read_reliability_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<ReliabilityRow> rows;
  if (!std::getline(in, line) ||
      line.rfind("bin_lower,bin_upper,count,mean_p,frac_pos", 0) != 0) {
    throw ValidationError(path.string() + ": missing reliability header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    ReliabilityRow row;
    char c1, c2, c3, c4;
    if (!(fields >> row.bin_lower >> c1 >> row.bin_upper >> c2 >> row.count >>
          c3 >> row.mean_p >> c4 >> row.frac_pos)) {
      throw ValidationError(path.string() + ": malformed row: " + line);
    }
    rows.push_back(row);
  }
  return rows;
}

Json eval_result_to_json(const EvalResult& result) {
  Json j;
  j["users_evaluated"] = result.users.size();
  j["users_skipped"] = result.users_skipped;
  Json mean = Json::object();
  for (const auto& [column, value] : result.mean) mean[column] = value;
  j["mean"] = std::move(mean);
  return j;
}

}  // namespace calrec
