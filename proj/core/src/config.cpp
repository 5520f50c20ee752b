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

#include "reseq/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace reseq {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail("config", "key '" + key + "': expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    fail("config", "key '" + key + "': cannot parse numeric value '" + v + "'");
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

KeyValueMap parse_kv_text(const std::string& text) {
  KeyValueMap kv;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      fail("config", "config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      fail("config", "config line " + std::to_string(line_no) + ": empty key");
    kv[key] = value;  // last writer wins
  }
  return kv;
}

KeyValueMap parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("not_found", "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kv_text(buf.str());
}

std::pair<std::string, std::string> parse_override(const std::string& arg) {
  auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0)
    fail("config", "override '" + arg + "' must have the form key=value");
  return {trim(arg.substr(0, eq)), trim(arg.substr(eq + 1))};
}

std::string format_kv(const KeyValueMap& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  return os.str();
}

void write_kv_file(const std::string& path, const KeyValueMap& kv) {
  std::ofstream out(path);
  if (!out) fail("not_found", "cannot write: " + path);
  out << format_kv(kv);
}

const char* mask_mode_name(MaskMode m) {
  return m == MaskMode::Standard ? "standard" : "bidirectional_all";
}

MaskMode mask_mode_from(const std::string& s) {
  if (s == "standard") return MaskMode::Standard;
  if (s == "bidirectional_all") return MaskMode::BidirectionalAll;
  fail("config", "mask_mode must be 'standard' or 'bidirectional_all', got '" + s + "'");
}

const char* micro_aggregation_name(MicroAggregation m) {
  return m == MicroAggregation::TimeSensitive ? "time_sensitive" : "mean";
}

MicroAggregation micro_aggregation_from(const std::string& s) {
  if (s == "time_sensitive") return MicroAggregation::TimeSensitive;
  if (s == "mean") return MicroAggregation::Mean;
  fail("config", "micro_aggregation must be 'time_sensitive' or 'mean', got '" + s + "'");
}

const std::vector<std::string>& training_config_keys() {
  static const std::vector<std::string> keys = {
      "d", "d_prime", "layers", "heads", "d_ff", "dropout", "max_seq_len", "init_std",
      "share_embeddings", "mask_mode", "micro_aggregation", "self_distill", "detach_teacher",
      "share_time_weight", "learning_rate", "weight_decay", "adam_beta1", "adam_beta2",
      "adam_eps", "batch_size", "max_epochs", "patience", "lambda_micro", "mu_distill", "seed",
      "threads", "scalar", "eval_k", "eval_negatives", "valid_eval_instances"};
  return keys;
}

void TrainingConfig::validate() const {
  if (d < 1 || d_prime < 1 || layers < 1 || heads < 1) fail("config", "model dims must be >= 1");
  if (d % heads != 0) fail("config", "d must be divisible by heads");
  if (dropout < 0 || dropout >= 1) fail("config", "dropout must lie in [0, 1)");
  if (max_seq_len < 1) fail("config", "max_seq_len must be >= 1");
  if (lambda_micro < 0) fail("config", "lambda_micro must be >= 0");
  if (mu_distill < 0) fail("config", "mu_distill must be >= 0");
  if (patience < 1) fail("config", "patience must be >= 1");
  if (batch_size < 1) fail("config", "batch_size must be >= 1");
  if (max_epochs < 1) fail("config", "max_epochs must be >= 1");
  if (eval_k < 1 || eval_negatives < 1) fail("config", "eval_k and eval_negatives must be >= 1");
  if (scalar != "f32" && scalar != "f64") fail("config", "scalar must be 'f32' or 'f64'");
}

KeyValueMap TrainingConfig::to_kv() const {
  KeyValueMap kv;
  kv["d"] = std::to_string(d);
  kv["d_prime"] = std::to_string(d_prime);
  kv["layers"] = std::to_string(layers);
  kv["heads"] = std::to_string(heads);
  kv["d_ff"] = std::to_string(d_ff);
  kv["dropout"] = format_double(dropout);
  kv["max_seq_len"] = std::to_string(max_seq_len);
  kv["init_std"] = format_double(init_std);
  kv["share_embeddings"] = share_embeddings ? "true" : "false";
  kv["mask_mode"] = mask_mode_name(mask_mode);
  kv["micro_aggregation"] = micro_aggregation_name(micro_aggregation);
  kv["self_distill"] = self_distill ? "true" : "false";
  kv["detach_teacher"] = detach_teacher ? "true" : "false";
  kv["share_time_weight"] = share_time_weight ? "true" : "false";
  kv["learning_rate"] = format_double(learning_rate);
  kv["weight_decay"] = format_double(weight_decay);
  kv["adam_beta1"] = format_double(adam_beta1);
  kv["adam_beta2"] = format_double(adam_beta2);
  kv["adam_eps"] = format_double(adam_eps);
  kv["batch_size"] = std::to_string(batch_size);
  kv["max_epochs"] = std::to_string(max_epochs);
  kv["patience"] = std::to_string(patience);
  kv["lambda_micro"] = format_double(lambda_micro);
  kv["mu_distill"] = format_double(mu_distill);
  kv["seed"] = std::to_string(seed);
  kv["threads"] = std::to_string(threads);
  kv["scalar"] = scalar;
  kv["eval_k"] = std::to_string(eval_k);
  kv["eval_negatives"] = std::to_string(eval_negatives);
  kv["valid_eval_instances"] = std::to_string(valid_eval_instances);
  return kv;
}

void TrainingConfig::apply_kv(const KeyValueMap& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "d") d = parse_num<int>(key, value);
    else if (key == "d_prime") d_prime = parse_num<int>(key, value);
    else if (key == "layers") layers = parse_num<int>(key, value);
    else if (key == "heads") heads = parse_num<int>(key, value);
    else if (key == "d_ff") d_ff = parse_num<int>(key, value);
    else if (key == "dropout") dropout = parse_num<double>(key, value);
    else if (key == "max_seq_len") max_seq_len = parse_num<int>(key, value);
    else if (key == "init_std") init_std = parse_num<double>(key, value);
    else if (key == "share_embeddings") share_embeddings = parse_bool(key, value);
    else if (key == "mask_mode") mask_mode = mask_mode_from(value);
    else if (key == "micro_aggregation") micro_aggregation = micro_aggregation_from(value);
    else if (key == "self_distill") self_distill = parse_bool(key, value);
    else if (key == "detach_teacher") detach_teacher = parse_bool(key, value);
    else if (key == "share_time_weight") share_time_weight = parse_bool(key, value);
    else if (key == "learning_rate") learning_rate = parse_num<double>(key, value);
    else if (key == "weight_decay") weight_decay = parse_num<double>(key, value);
    else if (key == "adam_beta1") adam_beta1 = parse_num<double>(key, value);
    else if (key == "adam_beta2") adam_beta2 = parse_num<double>(key, value);
    else if (key == "adam_eps") adam_eps = parse_num<double>(key, value);
    else if (key == "batch_size") batch_size = parse_num<int>(key, value);
    else if (key == "max_epochs") max_epochs = parse_num<int>(key, value);
    else if (key == "patience") patience = parse_num<int>(key, value);
    else if (key == "lambda_micro") lambda_micro = parse_num<double>(key, value);
    else if (key == "mu_distill") mu_distill = parse_num<double>(key, value);
    else if (key == "seed") seed = parse_num<std::uint64_t>(key, value);
    else if (key == "threads") threads = parse_num<int>(key, value);
    else if (key == "scalar") scalar = value;
    else if (key == "eval_k") eval_k = parse_num<int>(key, value);
    else if (key == "eval_negatives") eval_negatives = parse_num<int>(key, value);
    else if (key == "valid_eval_instances") valid_eval_instances = parse_num<int>(key, value);
    else {
      std::string keys;
      for (const auto& k : training_config_keys()) keys += (keys.empty() ? "" : ", ") + k;
      fail("config", "unknown config key '" + key + "'; valid keys: " + keys);
    }
  }
  validate();
}

TrainingConfig TrainingConfig::from_kv(const KeyValueMap& kv) {
  TrainingConfig cfg;
  cfg.apply_kv(kv);
  return cfg;
}

}  // namespace reseq
