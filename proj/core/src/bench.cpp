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

#include "reseq/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "reseq/common.hpp"
#include "reseq/matching.hpp"

namespace reseq {

namespace {

using Clock = std::chrono::steady_clock;

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0;
  double pos = q * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(pos);
  auto hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

struct PairData {
  // Pre-encoded stand-ins for one pair of users.
  Tensor<float> p_u, f_v, p_v, f_u;          // macro vectors (1 x d)
  Tensor<float> pm_u, fm_v, pm_v, fm_u;      // micro matrices (n x d)
  Tensor<float> e_p_u, e_f_v, e_p_v, e_f_u;  // original embeddings (1 x d)
};

Tensor<float> random_mat(Rng& rng, int r, int c) {
  Tensor<float> t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<float>(rng.normal(0.0, 1.0));
  return t;
}

}  // namespace

double timer_resolution_us() {
  double best = 1e9;
  for (int i = 0; i < 200; ++i) {
    auto t0 = Clock::now();
    auto t1 = Clock::now();
    while (t1 == t0) t1 = Clock::now();
    double delta = std::chrono::duration<double, std::micro>(t1 - t0).count();
    if (delta > 0 && delta < best) best = delta;
  }
  return best;
}

std::vector<LatencyRow> measure_latency(ScorerKind kind, const LatencyConfig& cfg) {
  if (cfg.batch < 1 || cfg.repetitions < 1) fail("config", "batch and repetitions must be >= 1");
  const double resolution = timer_resolution_us();
  std::vector<LatencyRow> rows;

  for (int n : cfg.n_values) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(n)));
    std::vector<PairData> pairs(static_cast<std::size_t>(cfg.batch));
    for (auto& pd : pairs) {
      pd.p_u = random_mat(rng, 1, cfg.d);
      pd.f_v = random_mat(rng, 1, cfg.d);
      pd.p_v = random_mat(rng, 1, cfg.d);
      pd.f_u = random_mat(rng, 1, cfg.d);
      if (kind == ScorerKind::Micro) {
        pd.pm_u = random_mat(rng, n, cfg.d);
        pd.fm_v = random_mat(rng, n, cfg.d);
        pd.pm_v = random_mat(rng, n, cfg.d);
        pd.fm_u = random_mat(rng, n, cfg.d);
        pd.e_p_u = random_mat(rng, 1, cfg.d);
        pd.e_f_v = random_mat(rng, 1, cfg.d);
        pd.e_p_v = random_mat(rng, 1, cfg.d);
        pd.e_f_u = random_mat(rng, 1, cfg.d);
      }
    }
    Tensor<float> alpha = random_mat(rng, n, 1);
    MicroWorkspace<float> ws;

    volatile double sink = 0;
    auto run_batch = [&]() {
      double acc = 0;
      if (kind == ScorerKind::Macro) {
        for (const auto& pd : pairs)
          acc += static_cast<double>(macro_direction(pd.p_u, pd.f_v) +
                                     macro_direction(pd.p_v, pd.f_u));
      } else {
        for (const auto& pd : pairs) {
          auto fwd = ti_sensi_match(pd.pm_u, pd.fm_v, pd.e_p_u, pd.e_f_v, alpha, n, n,
                                    MicroAggregation::TimeSensitive, &ws);
          auto bwd = ti_sensi_match(pd.pm_v, pd.fm_u, pd.e_p_v, pd.e_f_u, alpha, n, n,
                                    MicroAggregation::TimeSensitive, &ws);
          acc += static_cast<double>(*fwd + *bwd);
        }
      }
      sink = sink + acc;
    };

    std::vector<double> times_us;
    times_us.reserve(static_cast<std::size_t>(cfg.repetitions));
    for (int rep = 0; rep < cfg.warmup + cfg.repetitions; ++rep) {
      auto t0 = Clock::now();
      run_batch();
      auto t1 = Clock::now();
      if (rep >= cfg.warmup)
        times_us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }

    LatencyRow row;
    row.n = n;
    row.scorer = scorer_name(kind);
    row.median_us = percentile(times_us, 0.5);
    row.p90_us = percentile(times_us, 0.9);
    if (row.median_us < 4.0 * resolution)
      fail("timer", "measured interval (" + std::to_string(row.median_us) +
                        " us) is too close to the timer resolution (" +
                        std::to_string(resolution) + " us); increase the batch size");
    rows.push_back(std::move(row));
  }
  return rows;
}

GrowthFit fit_growth_exponent(const std::vector<std::pair<double, double>>& n_time) {
  std::vector<double> xs, ys;
  for (const auto& [n, t] : n_time) {
    if (t <= 0) fail("infeasible", "non-positive time in growth fit");
    if (n <= 0) fail("infeasible", "non-positive n in growth fit");
    xs.push_back(std::log(n));
    ys.push_back(std::log(t));
  }
  std::vector<double> distinct = xs;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) fail("infeasible", "growth fit needs at least 3 distinct n values");

  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  GrowthFit fit;
  fit.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.exponent * sx) / n;
  double ss = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double r = ys[i] - (fit.intercept + fit.exponent * xs[i]);
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / n);
  return fit;
}

GrowthFit fit_growth_exponent(const std::vector<LatencyRow>& rows) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows) pts.emplace_back(static_cast<double>(r.n), r.median_us);
  return fit_growth_exponent(pts);
}

std::string latency_csv(const std::vector<LatencyRow>& rows) {
  std::ostringstream os;
  os << "n,scorer,median_us,p90_us\n";
  for (const auto& r : rows) {
    os.precision(6);
    os << r.n << ',' << r.scorer << ',' << std::fixed << r.median_us << ',' << r.p90_us << '\n';
    os.unsetf(std::ios::fixed);
  }
  return os.str();
}

}  // namespace reseq
