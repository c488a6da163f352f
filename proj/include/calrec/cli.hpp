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
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace calrec {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

// Every tunable of the pipeline under a namespaced key (data.*, train.*,
// calib.*, bd.*, perk.*, eval.*) plus the global `seed`. Values come from
// the defaults, then a key=value file, then command-line overrides; unknown
// keys are rejected at every stage.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& keys();
  // Reference text listing every key with its default.
  static std::string reference(const std::string& prefix = "");

  void set(const std::string& key, const std::string& value);
  // Parses `key=value` (or `key = value`) lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  void apply_override(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_size_list(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

// Entry point shared by the calrec binary and the tests. Returns the exit
// status: 0 success, 1 I/O failure, 2 validation failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace calrec
