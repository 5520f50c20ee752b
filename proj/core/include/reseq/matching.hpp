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

#include <array>
#include <optional>
#include <vector>

#include "reseq/graph.hpp"
#include "reseq/numerics.hpp"
#include "reseq/tensor.hpp"

namespace reseq {

enum class MicroAggregation { TimeSensitive, Mean };

// Directional macro scores (y) and micro scores (z) for one user pair.
// Totals are the exact sums of the two directions.
template <typename Real>
struct MatchScores {
  Real y_fwd = 0, y_bwd = 0, y_total = 0;
  Real z_fwd = 0, z_bwd = 0, z_total = 0;
  bool micro_defined = false;
};

// Gather map realizing the relative time bias: the last valid position gets
// alpha[0], the one before alpha[1], and so on.
inline std::vector<int> relative_time_indices(int s) {
  std::vector<int> idx(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i) idx[static_cast<std::size_t>(i)] = s - 1 - i;
  return idx;
}

// alpha is the learned (n x 1) table; result is the (s x 1) per-position bias.
template <typename Real>
Tensor<Real> relative_time_bias(const Tensor<Real>& alpha, int s) {
  if (alpha.rank() != 2 || alpha.cols() != 1) fail("dimension", "alpha must be (n x 1)");
  if (s > alpha.rows()) fail("dimension", "sequence longer than time-weight table");
  Tensor<Real> bias(s, 1);
  for (int i = 0; i < s; ++i) bias(i, 0) = alpha(s - 1 - i, 0);
  return bias;
}

template <typename Real>
Real macro_direction(const Tensor<Real>& p, const Tensor<Real>& f) {
  if (p.size() != f.size()) fail("dimension", "macro score dimension mismatch");
  return detail::dot_n(p.data(), f.data(), static_cast<int>(p.size()));
}

template <typename Real>
MatchScores<Real> macro_score(const Tensor<Real>& p_u, const Tensor<Real>& f_v,
                              const Tensor<Real>& p_v, const Tensor<Real>& f_u) {
  MatchScores<Real> s;
  s.y_fwd = macro_direction(p_u, f_v);
  s.y_bwd = macro_direction(p_v, f_u);
  s.y_total = s.y_fwd + s.y_bwd;
  return s;
}

// Scratch buffers so a deployment-style caller can score repeatedly without
// reallocating.
template <typename Real>
struct MicroWorkspace {
  std::vector<Real> gamma, delta, row;
};

// Time-sensitive micro match of one direction: builds the fine-grained
// matching matrix G = p_mic * f_mic^T over the valid rows, co-attention
// weights gamma (passive side, keyed by the active user's original embedding)
// and delta (active side, keyed by the passive user's original embedding plus
// the relative time bias), and returns delta^T G gamma. With Mean
// aggregation both weight vectors are uniform, which reduces the result to
// the mean of the valid block of G. Returns nullopt when either side has no
// valid rows (micro undefined).
template <typename Real>
std::optional<Real> ti_sensi_match(const Tensor<Real>& p_mic, const Tensor<Real>& f_mic,
                                   const Tensor<Real>& e_p, const Tensor<Real>& e_f,
                                   const Tensor<Real>& alpha, int valid_p, int valid_f,
                                   MicroAggregation agg = MicroAggregation::TimeSensitive,
                                   MicroWorkspace<Real>* ws = nullptr) {
  if (valid_p < 1 || valid_f < 1) return std::nullopt;
  if (valid_p > p_mic.rows() || valid_f > f_mic.rows())
    fail("dimension", "valid counts exceed micro matrix rows");
  const int d = p_mic.cols();
  if (f_mic.cols() != d || static_cast<int>(e_p.size()) != d || static_cast<int>(e_f.size()) != d)
    fail("dimension", "micro match width mismatch");

  MicroWorkspace<Real> local;
  MicroWorkspace<Real>& w = ws ? *ws : local;
  w.gamma.assign(static_cast<std::size_t>(valid_f), Real(0));
  w.delta.assign(static_cast<std::size_t>(valid_p), Real(0));

  if (agg == MicroAggregation::Mean) {
    std::fill(w.gamma.begin(), w.gamma.end(), Real(1) / static_cast<Real>(valid_f));
    std::fill(w.delta.begin(), w.delta.end(), Real(1) / static_cast<Real>(valid_p));
  } else {
    if (alpha.rank() != 2 || alpha.cols() != 1) fail("dimension", "alpha must be (n x 1)");
    if (valid_p > alpha.rows()) fail("dimension", "sequence longer than time-weight table");
    for (int j = 0; j < valid_f; ++j)
      w.gamma[static_cast<std::size_t>(j)] = detail::dot_n(f_mic.row(j), e_p.data(), d);
    masked_softmax_row_inplace(w.gamma.data(), valid_f, [](int) { return true; });
    for (int i = 0; i < valid_p; ++i)
      w.delta[static_cast<std::size_t>(i)] =
          detail::dot_n(p_mic.row(i), e_f.data(), d) + alpha(valid_p - 1 - i, 0);
    masked_softmax_row_inplace(w.delta.data(), valid_p, [](int) { return true; });
  }

  // G is materialized row by row: the fine-grained matching matrix is the
  // deliberate O(n^2 d) step of this scorer.
  w.row.assign(static_cast<std::size_t>(valid_f), Real(0));
  Real result = 0;
  for (int i = 0; i < valid_p; ++i) {
    const Real* pi = p_mic.row(i);
    for (int j = 0; j < valid_f; ++j)
      w.row[static_cast<std::size_t>(j)] = detail::dot_n(pi, f_mic.row(j), d);
    result += w.delta[static_cast<std::size_t>(i)] *
              detail::dot_n(w.row.data(), w.gamma.data(), valid_f);
  }
  return result;
}

// Everything the matcher needs about one user at one time horizon.
template <typename Real>
struct UserEncoding {
  Tensor<Real> p, f;          // 1 x d macro representations
  Tensor<Real> p_mic, f_mic;  // s x d micro representations
  Tensor<Real> e_p, e_f;      // 1 x d original table embeddings
  int s = 0;                  // valid history length
};

template <typename Real>
MatchScores<Real> micro_score(MatchScores<Real> scores, const UserEncoding<Real>& u,
                              const UserEncoding<Real>& v, const Tensor<Real>& alpha_uv,
                              const Tensor<Real>& alpha_vu,
                              MicroAggregation agg = MicroAggregation::TimeSensitive) {
  auto fwd = ti_sensi_match(u.p_mic, v.f_mic, u.e_p, v.e_f, alpha_uv, u.s, v.s, agg);
  auto bwd = ti_sensi_match(v.p_mic, u.f_mic, v.e_p, u.e_f, alpha_vu, v.s, u.s, agg);
  if (fwd && bwd) {
    scores.z_fwd = *fwd;
    scores.z_bwd = *bwd;
    scores.z_total = scores.z_fwd + scores.z_bwd;
    scores.micro_defined = true;
  } else {
    scores.micro_defined = false;
  }
  return scores;
}

template <typename Real>
MatchScores<Real> pair_scores(const UserEncoding<Real>& u, const UserEncoding<Real>& v,
                              const Tensor<Real>& alpha_uv, const Tensor<Real>& alpha_vu,
                              MicroAggregation agg = MicroAggregation::TimeSensitive) {
  return micro_score(macro_score(u.p, v.f, v.p, u.f), u, v, alpha_uv, alpha_vu, agg);
}

// The four negative scores per scale, built by replacing exactly one element
// of the positive pair at a time, in this fixed order:
//   0: active side of u  (p_u  -> p_u')     2: active side of v  (p_v -> p_v')
//   1: passive side of u (f_u  -> f_u')     3: passive side of v (f_v -> f_v')
// The k-th micro negative replaces the same element as the k-th macro
// negative (with the matching original embedding and time-bias usage), which
// keeps the two sets index-aligned for distillation.
template <typename Real>
struct NegativeExpansion {
  std::array<Real, 4> y_neg{};
  std::array<Real, 4> z_neg{};
  bool micro_defined = false;
};

template <typename Real>
NegativeExpansion<Real> expand_negative_scores(const UserEncoding<Real>& u,
                                               const UserEncoding<Real>& v,
                                               const UserEncoding<Real>& u_neg,
                                               const UserEncoding<Real>& v_neg,
                                               const Tensor<Real>& alpha_uv,
                                               const Tensor<Real>& alpha_vu,
                                               MicroAggregation agg = MicroAggregation::TimeSensitive) {
  NegativeExpansion<Real> out;
  const Real y_fwd = macro_direction(u.p, v.f);
  const Real y_bwd = macro_direction(v.p, u.f);
  out.y_neg[0] = macro_direction(u_neg.p, v.f) + y_bwd;
  out.y_neg[1] = y_fwd + macro_direction(v.p, u_neg.f);
  out.y_neg[2] = y_fwd + macro_direction(v_neg.p, u.f);
  out.y_neg[3] = macro_direction(u.p, v_neg.f) + y_bwd;

  auto z_fwd = ti_sensi_match(u.p_mic, v.f_mic, u.e_p, v.e_f, alpha_uv, u.s, v.s, agg);
  auto z_bwd = ti_sensi_match(v.p_mic, u.f_mic, v.e_p, u.e_f, alpha_vu, v.s, u.s, agg);
  auto z0 = ti_sensi_match(u_neg.p_mic, v.f_mic, u_neg.e_p, v.e_f, alpha_uv, u_neg.s, v.s, agg);
  auto z1 = ti_sensi_match(v.p_mic, u_neg.f_mic, v.e_p, u_neg.e_f, alpha_vu, v.s, u_neg.s, agg);
  auto z2 = ti_sensi_match(v_neg.p_mic, u.f_mic, v_neg.e_p, u.e_f, alpha_vu, v_neg.s, u.s, agg);
  auto z3 = ti_sensi_match(u.p_mic, v_neg.f_mic, u.e_p, v_neg.e_f, alpha_uv, u.s, v_neg.s, agg);
  if (z_fwd && z_bwd && z0 && z1 && z2 && z3) {
    out.z_neg[0] = *z0 + *z_bwd;
    out.z_neg[1] = *z_fwd + *z1;
    out.z_neg[2] = *z_fwd + *z2;
    out.z_neg[3] = *z3 + *z_bwd;
    out.micro_defined = true;
  }
  return out;
}

}  // namespace reseq
