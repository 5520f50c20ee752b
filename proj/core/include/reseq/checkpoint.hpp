/*
 * Copyright 2026 The reseq Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reseq/model.hpp"

namespace reseq {

inline constexpr char kCheckpointMagic[] = "RESEQ1\n";
inline constexpr std::size_t kCheckpointMagicLen = 7;

struct CheckpointInfo {
  std::string dtype;
  int epoch = 0;
  double best_metric = 0.0;
  int users_u = 0;
  int users_v = 0;
  TrainingConfig config;
};

namespace detail_ckpt {

template <typename Real>
const char* dtype_name() {
  if constexpr (sizeof(Real) == 4) return "f32";
  else return "f64";
}

inline nlohmann::json read_header(std::istream& in, const std::string& path) {
  char magic[kCheckpointMagicLen];
  in.read(magic, static_cast<std::streamsize>(kCheckpointMagicLen));
  if (!in || std::memcmp(magic, kCheckpointMagic, kCheckpointMagicLen) != 0)
    fail("parse", "not a checkpoint file (bad magic): " + path);
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in) fail("parse", "truncated checkpoint header: " + path);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) fail("parse", "truncated checkpoint header: " + path);
  nlohmann::json j = nlohmann::json::parse(header, nullptr, false);
  if (j.is_discarded()) fail("parse", "corrupt checkpoint header: " + path);
  return j;
}

inline KeyValueMap kv_from_json(const nlohmann::json& j) {
  KeyValueMap kv;
  for (auto it = j.begin(); it != j.end(); ++it) kv[it.key()] = it.value().get<std::string>();
  return kv;
}

}  // namespace detail_ckpt

// Single binary file: magic, JSON manifest (tensor names, shapes, dtype, byte
// offsets, config snapshot, epoch, best metric) and a raw little-endian
// payload. Reload reproduces parameter values bit-exactly.
template <typename Real>
void save_checkpoint(const std::string& path, const Model<Real>& model, int epoch,
                     double best_metric) {
  nlohmann::json header;
  header["version"] = 1;
  header["dtype"] = detail_ckpt::dtype_name<Real>();
  header["epoch"] = epoch;
  header["best_metric"] = best_metric;
  header["users_u"] = model.users_u;
  header["users_v"] = model.users_v;
  nlohmann::json cfg_json;
  for (const auto& [k, v] : model.cfg.to_kv()) cfg_json[k] = v;
  header["config"] = cfg_json;

  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (int i = 0; i < model.params.count(); ++i) {
    const auto& p = model.params.at(i);
    nlohmann::json t;
    t["name"] = p.name;
    std::vector<int> shape;
    for (int r = 0; r < p.value.rank(); ++r) shape.push_back(p.value.dim(r));
    t["shape"] = shape;
    t["dtype"] = detail_ckpt::dtype_name<Real>();
    t["offset"] = offset;
    std::uint64_t bytes = p.value.size() * sizeof(Real);
    t["bytes"] = bytes;
    offset += bytes;
    tensors.push_back(std::move(t));
  }
  header["tensors"] = tensors;

  std::ofstream out(path, std::ios::binary);
  if (!out) fail("not_found", "cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, static_cast<std::streamsize>(kCheckpointMagicLen));
  std::string header_str = header.dump();
  std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (int i = 0; i < model.params.count(); ++i) {
    const auto& v = model.params.at(i).value;
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(Real)));
  }
  if (!out) fail("not_found", "failed writing checkpoint: " + path);
}

inline CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("not_found", "checkpoint not found: " + path);
  nlohmann::json j = detail_ckpt::read_header(in, path);
  CheckpointInfo info;
  info.dtype = j.at("dtype").get<std::string>();
  info.epoch = j.at("epoch").get<int>();
  info.best_metric = j.at("best_metric").get<double>();
  info.users_u = j.at("users_u").get<int>();
  info.users_v = j.at("users_v").get<int>();
  info.config = TrainingConfig::from_kv(detail_ckpt::kv_from_json(j.at("config")));
  return info;
}

template <typename Real>
Model<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("not_found", "checkpoint not found: " + path);
  nlohmann::json j = detail_ckpt::read_header(in, path);
  const std::string dtype = j.at("dtype").get<std::string>();
  if (dtype != detail_ckpt::dtype_name<Real>())
    fail("config", "checkpoint dtype " + dtype + " does not match requested scalar");

  TrainingConfig cfg = TrainingConfig::from_kv(detail_ckpt::kv_from_json(j.at("config")));
  Model<Real> model = Model<Real>::build(cfg, j.at("users_u").get<int>(),
                                         j.at("users_v").get<int>());

  const std::streampos payload_start = in.tellg();
  for (const auto& t : j.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    int id = model.params.find(name);
    if (id < 0) fail("parse", "checkpoint tensor '" + name + "' has no slot in the model");
    auto& value = model.params.mutable_value(id);
    std::uint64_t bytes = t.at("bytes").get<std::uint64_t>();
    if (bytes != value.size() * sizeof(Real))
      fail("parse", "checkpoint tensor '" + name + "' size mismatch");
    in.seekg(payload_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(bytes));
    if (!in) fail("parse", "truncated checkpoint payload: " + path);
  }
  return model;
}

}  // namespace reseq
