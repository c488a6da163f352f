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
#include <random>

namespace calrec {

using Rng = std::mt19937_64;

// Offsets added to the global seed to give each pipeline stage its own
// generator. Streams never share state, so changing one stage's draws
// leaves the others untouched.
enum class Stream : std::uint64_t {
  kSplit = 0,
  kInit = 1000,
  kTrain = 2000,
  kCalibration = 3000,
  kTeacherInit = 4000,
  kStudentInit = 5000,
  kTeacherTrain = 6000,
  kStudentTrain = 7000,
  kDistillSampling = 8000,
  kEvaluation = 9000,
};

inline std::uint64_t stream_seed(std::uint64_t global_seed, Stream stream) {
  return global_seed + static_cast<std::uint64_t>(stream);
}

// Per-epoch generator, so a run resumed at epoch e draws exactly what an
// uninterrupted run would have drawn.
inline Rng epoch_rng(std::uint64_t seed, std::uint64_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch),
                    static_cast<std::uint32_t>(epoch >> 32)};
  return Rng(seq);
}

}  // namespace calrec
