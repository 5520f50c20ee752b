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
#include <string>
#include <utility>
#include <vector>

namespace reseq {

enum class ScorerKind { Macro, Micro };

inline const char* scorer_name(ScorerKind k) { return k == ScorerKind::Macro ? "macro" : "micro"; }

struct LatencyConfig {
  std::vector<int> n_values{8, 16, 32, 64, 128};
  int d = 64;
  int batch = 256;
  int repetitions = 30;
  int warmup = 3;
  std::uint64_t seed = 1;
};

struct LatencyRow {
  int n = 0;
  std::string scorer;
  double median_us = 0;
  double p90_us = 0;
};

// Times the matching-prediction step only: encoder outputs are pre-generated
// outside the timed region, mirroring a deployment where sequence encodings
// are precomputed and cached. Each repetition times one pass over `batch`
// pairs; warmup repetitions are discarded and the median/p90 of the rest are
// reported. Errors when the measured interval is too close to the clock
// resolution to be meaningful.
std::vector<LatencyRow> measure_latency(ScorerKind kind, const LatencyConfig& cfg);

struct GrowthFit {
  double exponent = 0;   // least-squares slope of log t vs log n
  double intercept = 0;
  double residual_rms = 0;
};

// Ordinary least squares in log-log space over (n, time) points. Requires at
// least 3 distinct n values and strictly positive times.
GrowthFit fit_growth_exponent(const std::vector<std::pair<double, double>>& n_time);

GrowthFit fit_growth_exponent(const std::vector<LatencyRow>& rows);

std::string latency_csv(const std::vector<LatencyRow>& rows);

// Estimated smallest measurable interval of the steady clock, in microseconds.
double timer_resolution_us();

}  // namespace reseq
