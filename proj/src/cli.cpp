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

#include "calrec/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "calrec/calibration.hpp"
#include "calrec/dataset.hpp"
#include "calrec/distill.hpp"
#include "calrec/error.hpp"
#include "calrec/math.hpp"
#include "calrec/metrics.hpp"
#include "calrec/perk.hpp"
#include "calrec/random.hpp"
#include "calrec/ranker.hpp"
#include "calrec/serialization.hpp"

namespace calrec {

namespace fs = std::filesystem;

const std::vector<ConfigKey>& RunConfig::keys() {
  static const std::vector<ConfigKey> kKeys = {
      {"seed", "42", "global seed; each stage derives its own stream"},
      {"data.delimiter", ",", "column delimiter of the raw interaction file"},
      {"data.train_ratio", "0.8", "per-user train fraction"},
      {"data.val_ratio", "0.1", "per-user validation fraction"},
      {"data.test_ratio", "0.1", "per-user test fraction"},
      {"train.dim", "32", "embedding dimension of a standalone ranker"},
      {"train.lr", "0.05", "SGD learning rate"},
      {"train.reg", "0.0001", "L2 weight on touched embeddings"},
      {"train.epochs", "20", "training epochs"},
      {"train.batch_size", "1", "examples per SGD mini-batch"},
      {"train.loss", "bpr", "bpr | pointwise"},
      {"train.negatives", "4", "sampled negatives per positive (pointwise)"},
      {"calib.kind", "platt", "platt | gaussian | gamma | histogram"},
      {"calib.unbiased", "false", "weight the likelihood by inverse propensity"},
      {"calib.uniform_propensity", "false",
       "use theta = 1 for every item in unbiased mode"},
      {"calib.negatives", "100", "unobserved items sampled per held-out positive"},
      {"calib.tau", "0.5", "propensity exponent"},
      {"calib.theta_min", "0.01", "propensity floor"},
      {"calib.max_iters", "1000", "optimizer iteration cap"},
      {"calib.tol", "1e-8", "gradient infinity-norm stopping tolerance"},
      {"calib.bins", "15", "ECE / reliability bins"},
      {"calib.scheme", "equal_width", "equal_width | equal_mass"},
      {"bd.teacher_dim", "64", "teacher embedding dimension"},
      {"bd.student_dim", "16", "student embedding dimension"},
      {"bd.lambda_ts", "0.5", "teacher-from-student distillation weight"},
      {"bd.lambda_st", "0.5", "student-from-teacher distillation weight"},
      {"bd.sample_size", "10", "distillation items per user per epoch"},
      {"bd.eta", "0.1", "rank-discrepancy sharpness"},
      {"bd.truncate_rank", "100", "ranks beyond this are clamped"},
      {"bd.epochs", "10", "co-training epochs"},
      {"perk.k_max", "20", "largest cutoff considered"},
      {"perk.utility", "f1", "precision | recall | f1 | ndcg"},
      {"perk.rest_pool", "500", "candidates past k_max in the remaining pool"},
      {"eval.ks", "1,5,10,20", "fixed cutoffs"},
      {"eval.metrics", "precision,recall,f1,ndcg", "realized metrics"},
      {"eval.split", "test", "validation | test"},
      {"eval.auc_pairs", "100", "sampled pairs per user for AUC"},
  };
  return kKeys;
}

RunConfig::RunConfig() {
  for (const auto& key : keys()) values_[key.name] = key.default_value;
}

std::string RunConfig::reference(const std::string& prefix) {
  std::ostringstream out;
  for (const auto& key : keys()) {
    if (!prefix.empty() && key.name.rfind(prefix, 0) != 0 && key.name != "seed") {
      continue;
    }
    out << "  " << std::left << std::setw(33) << (key.name + "=" + key.default_value)
        << ' ' << key.help << "\n";
  }
  return out.str();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key: " + key);
  it->second = value;
}

namespace {

std::string trim_copy(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ValidationError("expected key=value, got '" + assignment + "'");
  }
  set(trim_copy(assignment.substr(0, eq)), trim_copy(assignment.substr(eq + 1)));
}

void RunConfig::load_file(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim_copy(line).empty()) continue;
    try {
      apply_override(line);
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": " + e.what());
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key: " + key);
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError(key + ": not a number: '" + v + "'");
  }
}

long long RunConfig::get_int(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ValidationError(key + ": not an integer: '" + v + "'");
  }
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  const long long n = get_int(key);
  if (n < 0) throw ValidationError(key + " must be >= 0");
  return static_cast<std::uint64_t>(n);
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> RunConfig::get_size_list(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : get_list(key)) {
    try {
      std::size_t used = 0;
      const long long n = std::stoll(item, &used);
      if (used != item.size() || n < 1) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(n));
    } catch (const std::exception&) {
      throw ValidationError(key + ": expected positive integers, got '" + item + "'");
    }
  }
  return out;
}

namespace {

std::size_t to_size(long long v, const char* key) {
  if (v < 0) throw ValidationError(std::string(key) + " must be >= 0");
  return static_cast<std::size_t>(v);
}

int to_int(long long v, const char* key) {
  if (v < 0 || v > 1'000'000'000) {
    throw ValidationError(std::string(key) + " out of range");
  }
  return static_cast<int>(v);
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.lr = cfg.get_double("train.lr");
  t.reg = cfg.get_double("train.reg");
  t.epochs = to_int(cfg.get_int("train.epochs"), "train.epochs");
  t.batch_size = to_int(cfg.get_int("train.batch_size"), "train.batch_size");
  t.loss_kind = parse_loss_kind(cfg.get("train.loss"));
  t.negatives_per_positive = to_int(cfg.get_int("train.negatives"), "train.negatives");
  t.seed = cfg.get_uint("seed");
  t.validate();
  return t;
}

BdConfig bd_config(const RunConfig& cfg) {
  BdConfig b;
  b.lambda_ts = cfg.get_double("bd.lambda_ts");
  b.lambda_st = cfg.get_double("bd.lambda_st");
  b.sample_size = to_int(cfg.get_int("bd.sample_size"), "bd.sample_size");
  b.eta = cfg.get_double("bd.eta");
  b.truncate_rank = to_int(cfg.get_int("bd.truncate_rank"), "bd.truncate_rank");
  b.epochs = to_int(cfg.get_int("bd.epochs"), "bd.epochs");
  b.seed = cfg.get_uint("seed");
  b.validate();
  return b;
}

PerkConfig perk_config(const RunConfig& cfg) {
  PerkConfig p;
  p.k_max = to_size(cfg.get_int("perk.k_max"), "perk.k_max");
  p.utility = parse_utility_kind(cfg.get("perk.utility"));
  p.rest_pool = to_size(cfg.get_int("perk.rest_pool"), "perk.rest_pool");
  p.validate();
  return p;
}

std::vector<UtilityKind> eval_metrics(const RunConfig& cfg) {
  std::vector<UtilityKind> out;
  for (const auto& name : cfg.get_list("eval.metrics")) {
    out.push_back(parse_utility_kind(name));
  }
  if (out.empty()) throw ValidationError("eval.metrics is empty");
  return out;
}

char delimiter_of(const RunConfig& cfg) {
  const auto& d = cfg.get("data.delimiter");
  if (d == "\\t" || d == "tab") return '\t';
  if (d.size() != 1) throw ValidationError("data.delimiter must be one character");
  return d[0];
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string());
  }
}

void check_model_fits(const MfParams& params, const Dataset& dataset) {
  if (params.num_users() != dataset.num_users() ||
      params.num_items() != dataset.num_items()) {
    throw ValidationError("checkpoint shape (" + std::to_string(params.num_users()) +
                          " users, " + std::to_string(params.num_items()) +
                          " items) does not match the dataset");
  }
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string input;
  std::string out;
};

int cmd_ingest(const IngestArgs& args, const RunConfig& cfg, std::ostream& out) {
  if (!fs::exists(args.input)) throw IoError("input not found: " + args.input);
  LoadOptions options;
  options.delimiter = delimiter_of(cfg);
  const RawInteractions raw = load_interactions(args.input, options);
  SplitRatios ratios{cfg.get_double("data.train_ratio"),
                     cfg.get_double("data.val_ratio"),
                     cfg.get_double("data.test_ratio")};
  const Dataset dataset = split_per_user(
      raw, ratios, stream_seed(cfg.get_uint("seed"), Stream::kSplit));
  save_bundle(args.out, raw.users, raw.items, dataset);
  Json summary;
  summary["users"] = dataset.num_users();
  summary["items"] = dataset.num_items();
  summary["interactions"] = raw.interactions.size();
  summary["train"] = dataset.train().size();
  summary["validation"] = dataset.validation().size();
  summary["test"] = dataset.test().size();
  out << summary.dump() << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string log;
  std::string resume;
  std::string role = "ranker";
};

struct RoleStreams {
  std::string dim_key;
  Stream init;
  Stream train;
};

RoleStreams role_streams(const std::string& role) {
  if (role == "ranker") return {"train.dim", Stream::kInit, Stream::kTrain};
  if (role == "teacher") {
    return {"bd.teacher_dim", Stream::kTeacherInit, Stream::kTeacherTrain};
  }
  if (role == "student") {
    return {"bd.student_dim", Stream::kStudentInit, Stream::kStudentTrain};
  }
  throw ValidationError("unknown role: " + role);
}

MfParams init_for(const Dataset& dataset, std::size_t dim, std::uint64_t seed,
                  Stream stream) {
  return init_params(dataset.num_users(), dataset.num_items(), dim,
                     stream_seed(seed, stream));
}

int cmd_train(const TrainArgs& args, const RunConfig& cfg, std::ostream& out) {
  const TrainConfig tcfg = train_config(cfg);
  const RoleStreams role = role_streams(args.role);
  const Bundle bundle = load_bundle(args.data);
  const Dataset& dataset = bundle.dataset;
  const std::uint64_t seed = tcfg.seed;

  MfParams params;
  int start_epoch = 0;
  if (!args.resume.empty()) {
    Checkpoint ckpt = load_checkpoint(args.resume);
    check_model_fits(ckpt.params, dataset);
    params = std::move(ckpt.params);
    start_epoch = ckpt.meta.epochs_completed;
  } else {
    params = init_for(dataset, to_size(cfg.get_int(role.dim_key), "dim"), seed,
                      role.init);
  }
  const fs::path log = args.log.empty() ? fs::path(args.out).replace_extension(".log.jsonl")
                                        : fs::path(args.log);
  ensure_parent(args.out);
  ensure_parent(log);
  if (args.resume.empty()) write_text(log, "");

  for (int epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
    Rng rng = epoch_rng(stream_seed(seed, role.train), static_cast<std::uint64_t>(epoch));
    const EpochStats stats = train_epoch(params, dataset, tcfg, rng);
    if (!params.all_finite()) {
      throw ValidationError("training diverged at epoch " + std::to_string(epoch + 1));
    }
    Json row;
    row["epoch"] = epoch + 1;
    row["model"] = args.role;
    row["loss_kind"] = loss_kind_name(tcfg.loss_kind);
    row["loss"] = stats.mean_loss;
    append_text(log, row.dump() + "\n");
  }
  CheckpointMeta meta{seed, tcfg.loss_kind, std::max(start_epoch, tcfg.epochs)};
  save_checkpoint(args.out, params, meta);

  Json summary;
  summary["epochs_completed"] = meta.epochs_completed;
  summary["dim"] = params.dim();
  if (!dataset.validation().empty()) {
    Rng rng(stream_seed(seed, Stream::kEvaluation));
    summary["validation_auc"] =
        auc(params, dataset, Split::kValidation, rng,
            to_size(cfg.get_int("eval.auc_pairs"), "eval.auc_pairs"));
  }
  out << summary.dump() << "\n";
  return 0;
}

// ---- calibrate ------------------------------------------------------------

struct CalibrateArgs {
  std::string data;
  std::string model;
  std::string out;
};

std::vector<Prediction> predictions(std::span<const CalibrationSample> samples,
                                    const Calibrator* cal) {
  std::vector<Prediction> preds;
  preds.reserve(samples.size());
  for (const auto& x : samples) {
    const double p = cal ? calibrate_score(*cal, x.s) : sigmoid(x.s);
    preds.push_back({p, static_cast<int>(x.y)});
  }
  return preds;
}

int cmd_calibrate(const CalibrateArgs& args, const RunConfig& cfg,
                  std::ostream& out) {
  const Bundle bundle = load_bundle(args.data);
  const Dataset& dataset = bundle.dataset;
  const Checkpoint ckpt = load_checkpoint(args.model);
  check_model_fits(ckpt.params, dataset);

  const auto kind = parse_calibrator_kind(cfg.get("calib.kind"));
  const bool unbiased = cfg.get_bool("calib.unbiased");
  const int negatives = to_int(cfg.get_int("calib.negatives"), "calib.negatives");
  const int bins = to_int(cfg.get_int("calib.bins"), "calib.bins");
  const auto scheme = parse_bin_scheme(cfg.get("calib.scheme"));
  FitOptions options;
  options.max_iters = to_int(cfg.get_int("calib.max_iters"), "calib.max_iters");
  options.tol = cfg.get_double("calib.tol");

  std::optional<PropensityModel> propensity;
  if (unbiased && !cfg.get_bool("calib.uniform_propensity")) {
    propensity = estimate_propensity(dataset.item_popularity(),
                                     cfg.get_double("calib.tau"),
                                     cfg.get_double("calib.theta_min"));
  }

  Rng rng(stream_seed(cfg.get_uint("seed"), Stream::kCalibration));
  const auto fit_samples = collect_calibration_samples(
      ckpt.params, dataset, Split::kValidation, negatives,
      propensity ? &*propensity : nullptr, rng);
  const Calibrator cal = fit_raw_scores(kind, fit_samples, unbiased, options);

  // Diagnostics on held-out test pairs when there are any.
  const Split eval_split =
      dataset.test().empty() ? Split::kValidation : Split::kTest;
  const auto eval_samples = collect_calibration_samples(
      ckpt.params, dataset, eval_split, negatives, nullptr, rng);
  const auto raw_preds = predictions(eval_samples, nullptr);
  const auto cal_preds = predictions(eval_samples, &cal);
  const auto raw_table = reliability_table(raw_preds, bins, scheme);
  const auto cal_table = reliability_table(cal_preds, bins, scheme);

  const fs::path dir(args.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  save_calibrator(dir / "calibrator.json", cal);
  write_reliability_csv(dir / "reliability.csv", cal_table);
  write_reliability_csv(dir / "reliability_uncalibrated.csv", raw_table);

  Json report;
  report["kind"] = calibrator_kind_name(kind);
  report["unbiased"] = unbiased;
  report["uniform_propensity"] = unbiased && !propensity;
  report["fit_split"] = "validation";
  report["fit_samples"] = fit_samples.size();
  report["eval_split"] = split_name(eval_split);
  report["eval_samples"] = eval_samples.size();
  report["num_bins"] = bins;
  report["scheme"] = bin_scheme_name(scheme);
  report["ece_uncalibrated"] = ece_from_table(raw_table);
  report["ece_calibrated"] = ece_from_table(cal_table);
  report["calibrator"] = calibrator_to_json(cal);
  write_text(dir / "ece_report.json", report.dump(2) + "\n");
  out << report.dump() << "\n";
  return 0;
}

// ---- distill --------------------------------------------------------------

struct DistillArgs {
  std::string data;
  std::string out;
  int save_every = 0;
};

double mean_recall_at(const MfParams& params, const Dataset& dataset,
                      Split split, std::size_t k) {
  double sum = 0.0;
  std::size_t users = 0;
  for (UserId u = 0; u < dataset.num_users(); ++u) {
    const auto relevant = dataset.user_items(split, u);
    if (relevant.empty()) continue;
    const auto top = top_items(params, u, dataset.user_items(Split::kTrain, u), k);
    sum += recall_at(top, relevant, k);
    ++users;
  }
  return users == 0 ? 0.0 : sum / static_cast<double>(users);
}

int cmd_distill(const DistillArgs& args, const RunConfig& cfg, std::ostream& out) {
  TrainConfig base = train_config(cfg);
  // Distillation targets are sigmoid probabilities; both models use the
  // pointwise base loss regardless of train.loss.
  base.loss_kind = LossKind::kPointwise;
  const BdConfig bd = bd_config(cfg);
  if (args.save_every < 0) throw ValidationError("--save-every must be >= 0");
  const Bundle bundle = load_bundle(args.data);
  const Dataset& dataset = bundle.dataset;
  const std::uint64_t seed = bd.seed;

  MfParams teacher = init_for(dataset, to_size(cfg.get_int("bd.teacher_dim"), "dim"),
                              seed, Stream::kTeacherInit);
  MfParams student = init_for(dataset, to_size(cfg.get_int("bd.student_dim"), "dim"),
                              seed, Stream::kStudentInit);

  const fs::path dir(args.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  const fs::path log = dir / "distill_log.jsonl";
  write_text(log, "");

  auto save = [&](int epochs) {
    save_checkpoint(dir / "teacher.json", teacher, {seed, LossKind::kPointwise, epochs});
    save_checkpoint(dir / "student.json", student, {seed, LossKind::kPointwise, epochs});
  };

  std::size_t empty_lists = 0;
  for (int epoch = 0; epoch < bd.epochs; ++epoch) {
    CotrainStreams streams = make_cotrain_streams(seed, static_cast<std::uint64_t>(epoch));
    const CotrainReport report =
        cotrain_epoch(teacher, student, dataset, base, bd, streams);
    if (!teacher.all_finite() || !student.all_finite()) {
      throw ValidationError("co-training diverged at epoch " + std::to_string(epoch + 1));
    }
    for (const auto& [name, r] : {std::pair{"teacher", report.teacher},
                                  std::pair{"student", report.student}}) {
      Json row;
      row["epoch"] = epoch + 1;
      row["model"] = name;
      row["base_loss"] = r.base_loss;
      row["distill_loss"] = r.distill_loss;
      row["sampled_total"] = r.sampled_total;
      row["empty_sample_users"] = r.empty_sample_users;
      append_text(log, row.dump() + "\n");
      empty_lists += r.empty_sample_users;
    }
    if (args.save_every > 0 && (epoch + 1) % args.save_every == 0) save(epoch + 1);
  }
  save(bd.epochs);

  const Split split = dataset.test().empty() ? Split::kValidation : Split::kTest;
  Json summary;
  summary["epochs"] = bd.epochs;
  summary["split"] = split_name(split);
  summary["teacher_recall@10"] = mean_recall_at(teacher, dataset, split, 10);
  summary["student_recall@10"] = mean_recall_at(student, dataset, split, 10);
  summary["empty_sample_lists"] = empty_lists;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  out << summary.dump() << "\n";
  return 0;
}

// ---- recommend ------------------------------------------------------------

struct RecommendArgs {
  std::string data;
  std::string model;
  std::string calibrator;
  std::string out;
  std::string mode = "fixed";
  std::size_t k = 10;
  bool allow_short = false;
};

int cmd_recommend(const RecommendArgs& args, const RunConfig& cfg,
                  std::ostream& out) {
  if (args.mode != "fixed" && args.mode != "perk") {
    throw ValidationError("--mode must be fixed or perk");
  }
  if (args.mode == "perk" && args.calibrator.empty()) {
    throw ValidationError("perk mode needs --calibrator");
  }
  if (args.k < 1) throw ValidationError("--k must be >= 1");
  const Bundle bundle = load_bundle(args.data);
  const Dataset& dataset = bundle.dataset;
  const Checkpoint ckpt = load_checkpoint(args.model);
  check_model_fits(ckpt.params, dataset);
  ensure_parent(args.out);

  std::string lines;
  Json summary;
  summary["mode"] = args.mode;
  if (args.mode == "fixed") {
    std::size_t users = 0;
    for (UserId u = 0; u < dataset.num_users(); ++u) {
      const auto items =
          top_items(ckpt.params, u, dataset.user_items(Split::kTrain, u), args.k);
      if (items.size() < args.k && !args.allow_short) {
        throw ValidationError("user " + std::to_string(u) + " has only " +
                              std::to_string(items.size()) +
                              " candidates; pass --allow-short");
      }
      lines += fixed_row_to_json(u, items).dump() + "\n";
      ++users;
    }
    summary["users"] = users;
    summary["k"] = args.k;
  } else {
    const Calibrator cal = load_calibrator(args.calibrator);
    const PerkConfig pcfg = perk_config(cfg);
    std::map<std::size_t, std::size_t> histogram;
    double k_sum = 0.0;
    double expected_sum = 0.0;
    std::size_t users = 0;
    for (UserId u = 0; u < dataset.num_users(); ++u) {
      if (dataset.user_items(Split::kTrain, u).size() >= dataset.num_items()) continue;
      const PersonalizedCut cut = perk_recommend(ckpt.params, cal, dataset, u, pcfg);
      lines += cut_to_json(cut).dump() + "\n";
      ++histogram[cut.k_star];
      k_sum += static_cast<double>(cut.k_star);
      expected_sum += cut.curve[cut.k_star - 1];
      ++users;
    }
    Json hist = Json::object();
    for (const auto& [k, n] : histogram) hist[std::to_string(k)] = n;
    summary["users"] = users;
    summary["utility"] = utility_kind_name(pcfg.utility);
    summary["mean_k_star"] = users ? k_sum / static_cast<double>(users) : 0.0;
    summary["k_star_histogram"] = std::move(hist);
    summary["mean_expected_utility"] =
        users ? expected_sum / static_cast<double>(users) : 0.0;
  }
  write_text(args.out, lines);
  out << summary.dump() << "\n";
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string fixed;
  std::string perk;
  std::string out;
  std::string table_csv;
  std::string per_user_csv;
};

std::vector<UserRecommendation> to_recommendations(
    const std::vector<RecommendationRow>& rows, bool personalized) {
  std::vector<UserRecommendation> recs;
  recs.reserve(rows.size());
  for (const auto& row : rows) {
    if (personalized && !row.k_star) {
      throw ValidationError("perk file row for user " + std::to_string(row.user) +
                            " has no k_star");
    }
    UserRecommendation rec{row.user, row.items, std::nullopt};
    if (personalized) rec.k_star = row.k_star;
    recs.push_back(std::move(rec));
  }
  return recs;
}

int cmd_eval(const EvalArgs& args, const RunConfig& cfg, std::ostream& out) {
  if (args.fixed.empty() && args.perk.empty()) {
    throw ValidationError("eval needs --fixed and/or --perk recommendations");
  }
  const Bundle bundle = load_bundle(args.data);
  const Dataset& dataset = bundle.dataset;
  const Split split = parse_split(cfg.get("eval.split"));
  const auto metrics = eval_metrics(cfg);
  const auto ks = cfg.get_size_list("eval.ks");

  Json report;
  report["split"] = split_name(split);
  std::vector<std::string> metric_names;
  for (auto m : metrics) metric_names.push_back(utility_kind_name(m));
  report["metrics"] = metric_names;
  report["ks"] = ks;

  Json comparison = Json::array();
  std::ostringstream table;
  table << std::setprecision(17) << "method,k";
  for (const auto& name : metric_names) table << ',' << name;
  table << '\n';
  std::ostringstream per_user;
  per_user << std::setprecision(17) << "method,user,column,value\n";

  auto dump_per_user = [&](const char* method, const EvalResult& result) {
    for (const auto& [column, values] : result.per_user) {
      for (std::size_t n = 0; n < values.size(); ++n) {
        per_user << method << ',' << result.users[n] << ',' << column << ','
                 << values[n] << '\n';
      }
    }
  };

  std::optional<std::size_t> skipped;
  if (!args.fixed.empty()) {
    const auto rows = load_recommendations(args.fixed);
    const auto recs = to_recommendations(rows, false);
    const EvalResult result = evaluate(recs, dataset, split, metrics, ks);
    report["fixed"] = eval_result_to_json(result);
    skipped = result.users_skipped;
    for (std::size_t k : ks) {
      Json row;
      row["method"] = "fixed";
      row["k"] = k;
      table << "fixed," << k;
      for (auto m : metrics) {
        const double v = result.mean.at(metric_column(m, k));
        row[utility_kind_name(m)] = v;
        table << ',' << v;
      }
      table << '\n';
      comparison.push_back(std::move(row));
    }
    dump_per_user("fixed", result);
  }
  if (!args.perk.empty()) {
    const auto rows = load_recommendations(args.perk);
    const auto recs = to_recommendations(rows, true);
    const EvalResult result = evaluate(recs, dataset, split, metrics, {});
    const UtilityKind utility = parse_utility_kind(cfg.get("perk.utility"));

    std::map<UserId, const RecommendationRow*> by_user;
    for (const auto& row : rows) by_user[row.user] = &row;
    std::map<std::size_t, std::size_t> histogram;
    double k_sum = 0.0;
    double expected_sum = 0.0;
    double realized_sum = 0.0;
    for (UserId u : result.users) {
      const auto& row = *by_user.at(u);
      k_sum += static_cast<double>(*row.k_star);
      expected_sum += row.curve[*row.k_star - 1];
      realized_sum += metric_at(utility, row.items, dataset.user_items(split, u),
                                *row.k_star);
      ++histogram[*row.k_star];
    }
    const auto n = static_cast<double>(result.users.size());
    Json perk = eval_result_to_json(result);
    Json hist = Json::object();
    for (const auto& [k, c] : histogram) hist[std::to_string(k)] = c;
    perk["utility"] = utility_kind_name(utility);
    perk["mean_k_star"] = k_sum / n;
    perk["k_star_histogram"] = std::move(hist);
    perk["mean_expected_utility"] = expected_sum / n;
    perk["mean_realized_utility"] = realized_sum / n;
    report["perk"] = perk;
    if (!skipped) skipped = result.users_skipped;

    Json row;
    row["method"] = "perk";
    row["k"] = "k*";
    row["mean_k_star"] = k_sum / n;
    table << "perk,k*";
    for (auto m : metrics) {
      const double v = result.mean.at(metric_column(m, std::nullopt));
      row[utility_kind_name(m)] = v;
      table << ',' << v;
    }
    table << '\n';
    comparison.push_back(std::move(row));
    dump_per_user("perk", result);
  }
  report["users_skipped"] = *skipped;
  report["comparison"] = std::move(comparison);

  ensure_parent(args.out);
  write_text(args.out, report.dump(2) + "\n");
  if (!args.table_csv.empty()) {
    ensure_parent(args.table_csv);
    write_text(args.table_csv, table.str());
  }
  if (!args.per_user_csv.empty()) {
    ensure_parent(args.per_user_csv);
    write_text(args.per_user_csv, per_user.str());
  }
  out << report["comparison"].dump() << "\n";
  return 0;
}

// ---- wiring ---------------------------------------------------------------

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& common, const std::string& namespaces) {
  cmd->add_option("--config", common.config_file,
                  "key=value configuration file");
  cmd->add_option("--set", common.overrides,
                  "override one key, e.g. --set train.epochs=5 (repeatable)");
  std::string footer = "\nConfiguration keys (key=default):\n";
  std::istringstream prefixes(namespaces);
  std::string prefix;
  while (prefixes >> prefix) footer += RunConfig::reference(prefix);
  cmd->footer(footer);
}

RunConfig resolve(const CommonArgs& common) {
  RunConfig cfg;
  if (!common.config_file.empty()) cfg.load_file(common.config_file);
  for (const auto& o : common.overrides) cfg.apply_override(o);
  return cfg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"calrec: calibrated ranking, bidirectional distillation and "
               "personalized top-K recommendation"};
  app.require_subcommand(0, 1);
  bool show_reference = false;
  app.add_flag("--config-reference", show_reference,
               "print every configuration key with its default");
  app.footer("\nConfiguration keys (key=default):\n" + RunConfig::reference());

  CommonArgs common;
  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "index raw interactions and split them per user");
  ingest_cmd->add_option("--input", ingest.input, "delimiter-separated user,item[,timestamp] file")->required();
  ingest_cmd->add_option("--out", ingest.out, "output bundle directory")->required();
  add_common(ingest_cmd, common, "data.");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a matrix-factorization ranker");
  train_cmd->add_option("--data", train.data, "dataset bundle directory")->required();
  train_cmd->add_option("--out", train.out, "checkpoint header path (.json); arrays go to .bin")->required();
  train_cmd->add_option("--log", train.log, "JSON-lines loss log (default <out>.log.jsonl)");
  train_cmd->add_option("--resume", train.resume, "continue from this checkpoint");
  train_cmd->add_option("--role", train.role,
                        "ranker | teacher | student: selects the dimension key and "
                        "seed streams (teacher/student match the distill command)");
  add_common(train_cmd, common, "train. bd. eval.");

  CalibrateArgs calibrate;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "fit a score calibrator and report ECE");
  calibrate_cmd->add_option("--data", calibrate.data, "dataset bundle directory")->required();
  calibrate_cmd->add_option("--model", calibrate.model, "ranker checkpoint header")->required();
  calibrate_cmd->add_option("--out", calibrate.out, "output directory")->required();
  add_common(calibrate_cmd, common, "calib.");

  DistillArgs distill;
  auto* distill_cmd = app.add_subcommand("distill", "co-train a teacher and a student with bidirectional distillation");
  distill_cmd->add_option("--data", distill.data, "dataset bundle directory")->required();
  distill_cmd->add_option("--out", distill.out, "output directory")->required();
  distill_cmd->add_option("--save-every", distill.save_every,
                          "also checkpoint every N epochs (0: only at the end)");
  add_common(distill_cmd, common, "train. bd.");

  RecommendArgs recommend;
  bool perk_flag = false;
  auto* recommend_cmd = app.add_subcommand("recommend", "write fixed top-K or personalized-K lists");
  recommend_cmd->add_option("--data", recommend.data, "dataset bundle directory")->required();
  recommend_cmd->add_option("--model", recommend.model, "ranker checkpoint header")->required();
  recommend_cmd->add_option("--out", recommend.out, "JSON-lines output")->required();
  recommend_cmd->add_option("--mode", recommend.mode, "fixed | perk");
  recommend_cmd->add_flag("--perk", perk_flag, "shorthand for --mode perk");
  recommend_cmd->add_option("--k", recommend.k, "list length in fixed mode");
  recommend_cmd->add_option("--calibrator", recommend.calibrator, "calibrator JSON (perk mode)");
  recommend_cmd->add_flag("--allow-short", recommend.allow_short,
                          "emit shorter lists for users with fewer than k candidates");
  add_common(recommend_cmd, common, "perk.");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate recommendation files on a split");
  eval_cmd->add_option("--data", eval.data, "dataset bundle directory")->required();
  eval_cmd->add_option("--fixed", eval.fixed, "fixed top-K recommendations (JSON lines)");
  eval_cmd->add_option("--perk", eval.perk, "personalized cuts (JSON lines)");
  eval_cmd->add_option("--out", eval.out, "report JSON")->required();
  eval_cmd->add_option("--table-csv", eval.table_csv, "comparison table as CSV");
  eval_cmd->add_option("--per-user-csv", eval.per_user_csv, "per-user metric values as CSV");
  add_common(eval_cmd, common, "eval. perk.");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (show_reference) {
      out << "# calrec configuration reference (key=default  description)\n"
          << RunConfig::reference();
      return 0;
    }
    if (app.got_subcommand(ingest_cmd)) return cmd_ingest(ingest, resolve(common), out);
    if (app.got_subcommand(train_cmd)) return cmd_train(train, resolve(common), out);
    if (app.got_subcommand(calibrate_cmd)) return cmd_calibrate(calibrate, resolve(common), out);
    if (app.got_subcommand(distill_cmd)) return cmd_distill(distill, resolve(common), out);
    if (app.got_subcommand(recommend_cmd)) {
      if (perk_flag) recommend.mode = "perk";
      return cmd_recommend(recommend, resolve(common), out);
    }
    if (app.got_subcommand(eval_cmd)) return cmd_eval(eval, resolve(common), out);
    out << app.help();
    return 0;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace calrec
