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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "reseq/common.hpp"
#include "reseq/matching.hpp"

namespace reseq {

enum class MaskMode { Standard, BidirectionalAll };

using KeyValueMap = std::map<std::string, std::string>;

// Flat `key = value` text: '#' comments and blank lines ignored.
KeyValueMap parse_kv_text(const std::string& text);
KeyValueMap parse_kv_file(const std::string& path);
// "key=value" command-line override.
std::pair<std::string, std::string> parse_override(const std::string& arg);
std::string format_kv(const KeyValueMap& kv);
void write_kv_file(const std::string& path, const KeyValueMap& kv);

// Every tunable of the model, optimizer, training loop and evaluation
// protocol, plus the ablation switches. The CLI mirrors these keys one to
// one in its config files.
struct TrainingConfig {
  // model
  int d = 64;
  int d_prime = 64;
  int layers = 2;
  int heads = 2;
  int d_ff = 0;  // 0 -> 4*d
  double dropout = 0.5;
  int max_seq_len = 50;
  double init_std = 0.02;
  // ablation switches
  bool share_embeddings = true;                  // off: four free tables
  MaskMode mask_mode = MaskMode::Standard;       // bidirectional_all: one mask everywhere
  MicroAggregation micro_aggregation = MicroAggregation::TimeSensitive;  // mean: uniform weights
  bool self_distill = true;                      // off: no distillation loss
  bool detach_teacher = true;
  bool share_time_weight = false;
  // optimization
  double learning_rate = 0.001;
  double weight_decay = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 256;
  int max_epochs = 200;
  int patience = 10;
  double lambda_micro = 5.0;
  double mu_distill = 0.005;
  std::uint64_t seed = 42;
  int threads = 4;
  std::string scalar = "f32";  // f32 | f64
  // evaluation protocol
  int eval_k = 5;
  int eval_negatives = 100;
  int valid_eval_instances = 500;  // per-epoch validation cap; 0 = all

  int effective_d_ff() const { return d_ff > 0 ? d_ff : 4 * d; }

  void validate() const;
  KeyValueMap to_kv() const;
  static TrainingConfig from_kv(const KeyValueMap& kv);

  // Applies only the keys present in `kv` on top of *this.
  void apply_kv(const KeyValueMap& kv);
};

const std::vector<std::string>& training_config_keys();

const char* mask_mode_name(MaskMode m);
MaskMode mask_mode_from(const std::string& s);
const char* micro_aggregation_name(MicroAggregation m);
MicroAggregation micro_aggregation_from(const std::string& s);

}  // namespace reseq
