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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "calrec/dataset.hpp"
#include "calrec/error.hpp"
#include "calrec/serialization.hpp"

using namespace calrec;

namespace {

Dataset tiny_dataset(std::size_t num_items, std::vector<Interaction> train) {
  return Dataset(1, num_items, std::move(train), {}, {});
}

}  // namespace

TEST_CASE("load_interactions counts users and items") {
  const auto raw = parse_interactions("a,x\na,y\nb,x\n");
  CHECK(raw.interactions.size() == 3);
  CHECK(raw.users.size() == 2);
  CHECK(raw.items.size() == 2);
}

TEST_CASE("duplicate lines collapse and timestamps are ignored") {
  const auto raw = parse_interactions("a,x,100\na,x,200\nb,y\n");
  CHECK(raw.interactions.size() == 2);
  CHECK(raw.interactions[0] == Interaction{0, 0});
}

TEST_CASE("arbitrary string ids map to dense indices and back") {
  const auto raw = parse_interactions("u17,itemZ\nu17,item9\nuser-x,itemZ\n");
  REQUIRE(raw.interactions.size() == 3);
  for (const auto& x : raw.interactions) {
    CHECK(raw.users.index_of(raw.users.id_of(x.user)) == x.user);
    CHECK(raw.items.index_of(raw.items.id_of(x.item)) == x.item);
  }
  CHECK(raw.users.id_of(0) == "u17");
  CHECK(raw.items.id_of(1) == "item9");
}

TEST_CASE("custom delimiter and an existing id map") {
  LoadOptions tab;
  tab.delimiter = '\t';
  auto first = parse_interactions("a\tx\n", tab);
  auto second = parse_interactions("b\tx\na\ty\n", tab, std::move(first));
  CHECK(second.users.index_of("a") == 0);
  CHECK(second.users.index_of("b") == 1);
  CHECK(second.items.index_of("y") == 1);
}

TEST_CASE("malformed input reports the line number") {
  try {
    parse_interactions("a,x\nb\nc,z\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_interactions("a,x,1,2\n"), ParseError);
  CHECK_THROWS_AS(parse_interactions(",x\n"), ParseError);
  CHECK_THROWS_AS(parse_interactions("\n\n"), ValidationError);
  CHECK_THROWS_AS(load_interactions("/nonexistent/file.csv"), IoError);
}

TEST_CASE("split of a ten-item user is 8/1/1") {
  RawInteractions raw;
  raw.users.intern("u");
  for (ItemId i = 0; i < 10; ++i) {
    raw.items.intern("i" + std::to_string(i));
    raw.interactions.push_back({0, i});
  }
  const Dataset d = split_per_user(raw, {0.8, 0.1, 0.1}, 7);
  CHECK(d.train().size() == 8);
  CHECK(d.validation().size() == 1);
  CHECK(d.test().size() == 1);
}

TEST_CASE("users with fewer than three interactions keep everything in train") {
  const auto raw = parse_interactions("a,x\na,y\nb,x\nb,y\nb,z\nb,w\n");
  const Dataset d = split_per_user(raw, {0.5, 0.25, 0.25}, 1);
  CHECK(d.user_items(Split::kTrain, 0).size() == 2);
  CHECK(d.user_items(Split::kValidation, 0).empty());
  CHECK(d.user_items(Split::kTest, 0).empty());
}

TEST_CASE("split is deterministic and partitions each user's interactions") {
  std::string text;
  for (int u = 0; u < 30; ++u) {
    for (int i = 0; i < 3 + u % 7; ++i) {
      text += "u" + std::to_string(u) + ",i" + std::to_string((u * 7 + i * 3) % 40) + "\n";
    }
  }
  const auto raw = parse_interactions(text);
  const Dataset a = split_per_user(raw, {0.6, 0.2, 0.2}, 99);
  const Dataset b = split_per_user(raw, {0.6, 0.2, 0.2}, 99);
  CHECK(a.train() == b.train());
  CHECK(a.validation() == b.validation());
  CHECK(a.test() == b.test());

  std::set<Interaction> all(raw.interactions.begin(), raw.interactions.end());
  std::set<Interaction> joined;
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    for (const auto& x : a.interactions(s)) CHECK(joined.insert(x).second);
  }
  CHECK(joined == all);
  for (UserId u = 0; u < a.num_users(); ++u) {
    CHECK(!a.user_items(Split::kTrain, u).empty());
  }
  std::vector<std::uint32_t> pop(a.num_items(), 0);
  for (const auto& x : a.train()) ++pop[x.item];
  CHECK(pop == a.item_popularity());
}

TEST_CASE("split rejects bad ratios and empty input") {
  const auto raw = parse_interactions("a,x\n");
  CHECK_THROWS_AS(split_per_user(raw, {0.5, 0.5, 0.5}, 1), ValidationError);
  CHECK_THROWS_AS(split_per_user(raw, {1.0, 0.0, 0.0}, 1), ValidationError);
  CHECK_THROWS_AS(split_per_user(RawInteractions{}, {0.8, 0.1, 0.1}, 1),
                  ValidationError);
}

TEST_CASE("Dataset rejects overlapping splits and out-of-range pairs") {
  CHECK_THROWS_AS(Dataset(1, 2, {{0, 0}}, {{0, 0}}, {}), ValidationError);
  CHECK_THROWS_AS(Dataset(1, 2, {{0, 0}, {0, 0}}, {}, {}), ValidationError);
  CHECK_THROWS_AS(Dataset(1, 2, {{0, 2}}, {}, {}), ValidationError);
  CHECK_THROWS_AS(Dataset(1, 2, {{1, 0}}, {}, {}), ValidationError);
}

TEST_CASE("sample_negative is forced when one item is left") {
  const Dataset d = tiny_dataset(3, {{0, 0}, {0, 1}});
  Rng rng(3);
  for (int n = 0; n < 100; ++n) CHECK(sample_negative(d, 0, rng) == 2);
}

TEST_CASE("sample_negative fails when train covers every item") {
  const Dataset d = tiny_dataset(2, {{0, 0}, {0, 1}});
  Rng rng(3);
  CHECK_THROWS_AS(sample_negative(d, 0, rng), ValidationError);
}

TEST_CASE("sample_negative is uniform over non-train items") {
  // 10 items, 3 in train: 7 candidates, 10k draws. Each count is
  // Binomial(10000, 1/7); require every count within 3 sigma and a
  // chi-square statistic below the 0.999 quantile for 6 dof (22.46).
  const Dataset d = tiny_dataset(10, {{0, 1}, {0, 4}, {0, 8}});
  Rng rng(2024);
  std::vector<int> counts(10, 0);
  const int draws = 10000;
  for (int n = 0; n < draws; ++n) ++counts[sample_negative(d, 0, rng)];
  CHECK(counts[1] == 0);
  CHECK(counts[4] == 0);
  CHECK(counts[8] == 0);
  const double expected = draws / 7.0;
  const double sigma = std::sqrt(draws * (1.0 / 7.0) * (6.0 / 7.0));
  double chi2 = 0.0;
  for (int i : {0, 2, 3, 5, 6, 7, 9}) {
    CHECK(std::abs(counts[i] - expected) < 3 * sigma);
    chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  }
  CHECK(chi2 < 22.46);
}

TEST_CASE("sample_negative enumerates when train is dense") {
  std::vector<Interaction> train;
  for (ItemId i = 0; i < 99; ++i) train.push_back({0, i});
  const Dataset d = tiny_dataset(100, train);
  Rng rng(1);
  CHECK(sample_negative(d, 0, rng) == 99);
}

TEST_CASE("bundle round-trips through disk") {
  const auto dir = std::filesystem::temp_directory_path() / "calrec_bundle_test";
  std::filesystem::remove_all(dir);
  const auto raw = parse_interactions("a,x\na,y\na,z\na,w\nb,x\nc,q\n");
  const Dataset d = split_per_user(raw, {0.5, 0.25, 0.25}, 5);
  save_bundle(dir, raw.users, raw.items, d);
  for (const char* name : kBundleFiles) CHECK(std::filesystem::exists(dir / name));
  const Bundle b = load_bundle(dir);
  CHECK(b.users.ids() == raw.users.ids());
  CHECK(b.items.ids() == raw.items.ids());
  CHECK(b.dataset.train() == d.train());
  CHECK(b.dataset.validation() == d.validation());
  CHECK(b.dataset.test() == d.test());
  std::filesystem::remove_all(dir);
}
