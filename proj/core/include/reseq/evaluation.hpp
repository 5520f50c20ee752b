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
#include <functional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "reseq/data.hpp"
#include "reseq/model.hpp"

namespace reseq {

// 1 + number of negatives scoring >= the positive: ties count against the
// positive.
inline int rank_position(double positive, const std::vector<double>& negatives) {
  if (!std::isfinite(positive) && positive > 0) return 1;  // +inf beats everything
  int worse_or_equal = 0;
  for (double n : negatives)
    if (n >= positive) ++worse_or_equal;
  return 1 + worse_or_equal;
}

struct RankMetrics {
  double hr = 0, mrr = 0, ndcg = 0;
};

// Single-relevant-item closed forms at cutoff k.
inline RankMetrics metrics_at_k(int rank, int k = 5) {
  if (rank < 1) fail("dimension", "rank must be >= 1");
  RankMetrics m;
  if (rank <= k) {
    m.hr = 1.0;
    m.mrr = 1.0 / static_cast<double>(rank);
    m.ndcg = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  return m;
}

struct EvalConfig {
  int k = 5;
  int negatives = 100;
  std::uint64_t seed = 0;
  int max_instances = 0;  // 0 = evaluate every positive in the split
  int threads = 1;
  int max_seq_len = 50;
};

struct PerspectiveMetrics {
  std::int64_t instances = 0;
  double hr = 0, mrr = 0, ndcg = 0;
};

struct EvalReport {
  PerspectiveMetrics perspective_u;  // ranking V candidates for the U-side user
  PerspectiveMetrics perspective_v;  // ranking U candidates for the V-side user
  std::int64_t negatives_drawn = 0;
  std::int64_t empty_history_negatives = 0;
  int k = 5;
  int negatives_per_instance = 100;

  double empty_negative_rate() const {
    return negatives_drawn == 0
               ? 0.0
               : static_cast<double>(empty_history_negatives) / static_cast<double>(negatives_drawn);
  }
  double mean_ndcg() const { return 0.5 * (perspective_u.ndcg + perspective_v.ndcg); }
  double mean_hr() const { return 0.5 * (perspective_u.hr + perspective_v.hr); }

  std::vector<std::pair<std::string, std::string>> kv() const {
    auto fmt = [](double v) {
      std::ostringstream os;
      os.precision(10);
      os << v;
      return os.str();
    };
    std::vector<std::pair<std::string, std::string>> out;
    std::string ks = std::to_string(k);
    out.emplace_back("perspective_u.instances", std::to_string(perspective_u.instances));
    out.emplace_back("perspective_u.hr@" + ks, fmt(perspective_u.hr));
    out.emplace_back("perspective_u.mrr@" + ks, fmt(perspective_u.mrr));
    out.emplace_back("perspective_u.ndcg@" + ks, fmt(perspective_u.ndcg));
    out.emplace_back("perspective_v.instances", std::to_string(perspective_v.instances));
    out.emplace_back("perspective_v.hr@" + ks, fmt(perspective_v.hr));
    out.emplace_back("perspective_v.mrr@" + ks, fmt(perspective_v.mrr));
    out.emplace_back("perspective_v.ndcg@" + ks, fmt(perspective_v.ndcg));
    out.emplace_back("mean.hr@" + ks, fmt(mean_hr()));
    out.emplace_back("mean.ndcg@" + ks, fmt(mean_ndcg()));
    out.emplace_back("negatives_per_instance", std::to_string(negatives_per_instance));
    out.emplace_back("empty_negative_rate", fmt(empty_negative_rate()));
    return out;
  }

  std::string text_table() const {
    std::ostringstream os;
    std::string ks = std::to_string(k);
    os << "perspective   instances   HR@" << ks << "      MRR@" << ks << "     NDCG@" << ks << "\n";
    auto row = [&](const char* name, const PerspectiveMetrics& m) {
      os.setf(std::ios::fixed);
      os.precision(4);
      os << name << "   " << m.instances << "      " << m.hr << "    " << m.mrr << "    "
         << m.ndcg << "\n";
    };
    row("rank-V-for-u", perspective_u);
    row("rank-U-for-v", perspective_v);
    os << "mean NDCG@" << ks << ": " << mean_ndcg()
       << "   empty-history negative rate: " << empty_negative_rate() << "\n";
    return os.str();
  }
};

// Scores one ranking instance: `candidates` live on the side opposite the
// probe; candidates[0] is the positive counterpart. Must return one score per
// candidate, higher = stronger match.
using CandidateScorer = std::function<std::vector<double>(
    Side probe_side, int probe, std::int64_t T, const std::vector<int>& candidates)>;

namespace detail_eval {

struct Accumulator {
  std::int64_t count = 0;
  double hr = 0, mrr = 0, ndcg = 0;
  std::int64_t negatives = 0, empty_negatives = 0;
};

inline std::vector<int> sample_candidates(Rng& rng, int side_count, int positive, int negatives) {
  if (side_count - 1 < negatives)
    fail("infeasible", "side has too few users to sample " + std::to_string(negatives) +
                           " distinct negatives");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(negatives) + 1);
  out.push_back(positive);
  std::unordered_set<int> used{positive};
  while (static_cast<int>(out.size()) < negatives + 1) {
    int cand = static_cast<int>(rng.below(static_cast<std::uint64_t>(side_count)));
    if (used.insert(cand).second) out.push_back(cand);
  }
  return out;
}

}  // namespace detail_eval

// Dual-perspective leakage-safe ranking evaluation. For every positive
// interaction (u, v, T) two instances are built: rank the positive v among
// sampled V-side negatives for u, and the positive u among U-side negatives
// for v. All candidate histories are truncated to T and audited; an event at
// or after T fails the run. Negatives are drawn per instance from a seeded
// stream keyed by the record's position in the split, so results do not
// depend on threading or instance capping.
inline EvalReport evaluate_with_scorer(const CandidateScorer& scorer,
                                       const InteractionStore& store,
                                       const std::vector<InteractionRecord>& records,
                                       const EvalConfig& cfg) {
  if (records.empty()) fail("infeasible", "evaluate_split on an empty split");
  auto indexed = store.index_records(records);

  std::vector<std::size_t> selected(indexed.size());
  for (std::size_t i = 0; i < indexed.size(); ++i) selected[i] = i;
  if (cfg.max_instances > 0 && selected.size() > static_cast<std::size_t>(cfg.max_instances)) {
    Rng rng(derive_seed(cfg.seed, 0xca9));
    rng.shuffle(selected);
    selected.resize(static_cast<std::size_t>(cfg.max_instances));
    std::sort(selected.begin(), selected.end());
  }

  const int threads = resolve_threads(cfg.threads);
  std::vector<detail_eval::Accumulator> acc_u(static_cast<std::size_t>(threads));
  std::vector<detail_eval::Accumulator> acc_v(static_cast<std::size_t>(threads));

  parallel_for(selected.size(), threads, [&](std::size_t begin, std::size_t end, int worker) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& rec = indexed[selected[i]];
      for (int persp = 0; persp < 2; ++persp) {
        const bool probe_is_u = persp == 0;
        const Side probe_side = probe_is_u ? Side::U : Side::V;
        const Side cand_side = opposite(probe_side);
        const int probe = probe_is_u ? rec.u : rec.v;
        const int positive = probe_is_u ? rec.v : rec.u;
        Rng rng(derive_seed(cfg.seed, selected[i], static_cast<std::uint64_t>(persp)));
        auto candidates = detail_eval::sample_candidates(rng, store.user_count(cand_side),
                                                         positive, cfg.negatives);
        auto& acc = (probe_is_u ? acc_u : acc_v)[static_cast<std::size_t>(worker)];
        audit_sequence_before(store.truncated_sequence(probe_side, probe, rec.ts, cfg.max_seq_len),
                              rec.ts);
        for (std::size_t c = 0; c < candidates.size(); ++c) {
          auto seq = store.truncated_sequence(cand_side, candidates[c], rec.ts, cfg.max_seq_len);
          audit_sequence_before(seq, rec.ts);
          if (c > 0) {
            ++acc.negatives;
            if (seq.empty()) ++acc.empty_negatives;
          }
        }
        auto scores = scorer(probe_side, probe, rec.ts, candidates);
        if (scores.size() != candidates.size())
          fail("dimension", "scorer returned wrong number of scores");
        std::vector<double> neg_scores(scores.begin() + 1, scores.end());
        int rank = rank_position(scores[0], neg_scores);
        RankMetrics m = metrics_at_k(rank, cfg.k);
        acc.count += 1;
        acc.hr += m.hr;
        acc.mrr += m.mrr;
        acc.ndcg += m.ndcg;
      }
    }
  });

  EvalReport report;
  report.k = cfg.k;
  report.negatives_per_instance = cfg.negatives;
  auto fold = [](const std::vector<detail_eval::Accumulator>& accs, PerspectiveMetrics* out,
                 std::int64_t* negs, std::int64_t* empties) {
    double hr = 0, mrr = 0, ndcg = 0;
    std::int64_t count = 0;
    for (const auto& a : accs) {
      hr += a.hr;
      mrr += a.mrr;
      ndcg += a.ndcg;
      count += a.count;
      *negs += a.negatives;
      *empties += a.empty_negatives;
    }
    out->instances = count;
    if (count > 0) {
      out->hr = hr / static_cast<double>(count);
      out->mrr = mrr / static_cast<double>(count);
      out->ndcg = ndcg / static_cast<double>(count);
    }
  };
  fold(acc_u, &report.perspective_u, &report.negatives_drawn, &report.empty_history_negatives);
  fold(acc_v, &report.perspective_v, &report.negatives_drawn, &report.empty_history_negatives);
  return report;
}

// Deployment scoring path: macro-only, Eq.-style two-directional dot product.
// The probe is encoded once per instance, every candidate once.
template <typename Real>
CandidateScorer make_macro_scorer(const Model<Real>& model, const InteractionStore& store) {
  return [&model, &store](Side probe_side, int probe, std::int64_t T,
                          const std::vector<int>& candidates) {
    auto probe_enc = model.encode_user(store, probe_side, probe, T);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    const Side cand_side = opposite(probe_side);
    for (int cand : candidates) {
      auto cand_enc = model.encode_user(store, cand_side, cand, T);
      double fwd = static_cast<double>(macro_direction(probe_enc.p, cand_enc.f));
      double bwd = static_cast<double>(macro_direction(cand_enc.p, probe_enc.f));
      scores.push_back(fwd + bwd);
    }
    return scores;
  };
}

template <typename Real>
EvalReport evaluate_split(const Model<Real>& model, const InteractionStore& store,
                          const std::vector<InteractionRecord>& records, EvalConfig cfg) {
  cfg.max_seq_len = model.cfg.max_seq_len;
  return evaluate_with_scorer(make_macro_scorer(model, store), store, records, cfg);
}

}  // namespace reseq
