/*
 * Copyright 2026 The qpriv Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#ifndef QPRIV_CHECKPOINT_HPP_
#define QPRIV_CHECKPOINT_HPP_

// Model checkpoints are one JSON object:
//
//   {"format": "qpriv-checkpoint", "version": 1, "kind": "lm" | "encoder",
//    "dims": {...}, "vocab_hash": "<16 hex digits>", "vocab": [...],
//    "params": [{"name": ..., "rows": r, "cols": c, "data": [r*c doubles,
//                row-major]}, ...]}
//
// Doubles are written with round-trip precision, so load(save(m)) == m.

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "qpriv/autodiff.hpp"
#include "qpriv/tokenizer.hpp"

namespace qpriv {

inline constexpr const char* kCheckpointFormat = "qpriv-checkpoint";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json params_to_json(const ad::ParamSet& params);
ad::ParamSet params_from_json(const nlohmann::json& j);

nlohmann::json make_checkpoint(const std::string& kind, const nlohmann::json& dims,
                               const Tokenizer& tokenizer, const ad::ParamSet& params);

struct CheckpointContents {
  nlohmann::json dims;
  Tokenizer tokenizer;
  ad::ParamSet params;
};

// Validates format, version, kind and that the vocabulary matches its hash.
CheckpointContents read_checkpoint(const nlohmann::json& j, const std::string& kind);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

std::string hex64(std::uint64_t v);

}  // namespace qpriv

#endif  // QPRIV_CHECKPOINT_HPP_
