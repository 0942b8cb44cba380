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

#include "qpriv/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "qpriv/types.hpp"

namespace qpriv {

nlohmann::json params_to_json(const ad::ParamSet& params) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : params.layout().entries()) {
    const auto m = params[e.name];
    std::vector<double> data(m.data(), m.data() + m.size());
    out.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}, {"data", data}});
  }
  return out;
}

ad::ParamSet params_from_json(const nlohmann::json& j) {
  check(j.is_array(), "checkpoint: params must be an array");
  ad::ParamSet p;
  for (const auto& e : j) {
    const auto name = e.at("name").get<std::string>();
    const auto rows = e.at("rows").get<Index>();
    const auto cols = e.at("cols").get<Index>();
    const auto data = e.at("data").get<std::vector<double>>();
    check(rows >= 0 && cols >= 0 && static_cast<Index>(data.size()) == rows * cols,
          "checkpoint: parameter '" + name + "' has " + std::to_string(data.size()) +
              " values for shape " + ad::shape_string(rows, cols));
    p.add(name, Eigen::Map<const Matrix>(data.data(), rows, cols));
  }
  return p;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json make_checkpoint(const std::string& kind, const nlohmann::json& dims,
                               const Tokenizer& tokenizer, const ad::ParamSet& params) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"kind", kind},
          {"dims", dims},
          {"vocab_hash", hex64(tokenizer.hash())},
          {"vocab", tokenizer},
          {"params", params_to_json(params)}};
}

CheckpointContents read_checkpoint(const nlohmann::json& j, const std::string& kind) {
  check(j.is_object() && j.value("format", "") == kCheckpointFormat, "not a qpriv checkpoint");
  check(j.value("version", 0) == kCheckpointVersion,
        "unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  check(j.value("kind", "") == kind,
        "checkpoint holds a '" + j.value("kind", "") + "' model, expected '" + kind + "'");
  CheckpointContents c;
  c.dims = j.at("dims");
  c.tokenizer = j.at("vocab").get<Tokenizer>();
  check(hex64(c.tokenizer.hash()) == j.value("vocab_hash", ""), "checkpoint: vocabulary hash mismatch");
  c.params = params_from_json(j.at("params"));
  return c;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot write " + path.string());
  out << j.dump(2) << '\n';
  check(out.good(), "write failed: " + path.string());
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace qpriv
