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

// Writes a synthetic implicit-feedback file in the `user,item` format the
// ingest command reads.

#include <iostream>

#include <CLI11.hpp>

#include "calrec/error.hpp"
#include "calrec/serialization.hpp"
#include "calrec/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate a low-rank synthetic interaction file"};
  calrec::SyntheticConfig cfg;
  std::string out;
  app.add_option("--out", out, "output file")->required();
  app.add_option("--users", cfg.num_users, "number of users");
  app.add_option("--items", cfg.num_items, "number of items");
  app.add_option("--rank", cfg.rank, "latent rank");
  app.add_option("--scale", cfg.scale, "logit scale of the latent dot product");
  app.add_option("--popularity-skew", cfg.popularity_skew, "spread of item popularity logits");
  app.add_option("--density", cfg.density, "expected fraction of observed pairs");
  app.add_option("--seed", cfg.seed, "generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto raw = calrec::generate_interactions(cfg);
    calrec::write_text(out, calrec::to_csv(raw));
    std::cout << raw.interactions.size() << " interactions, " << raw.users.size()
              << " users, " << raw.items.size() << " items\n";
  } catch (const calrec::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
