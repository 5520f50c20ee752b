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

#include <string>
#include <vector>

#include "reseq/data.hpp"
#include "reseq/graph.hpp"
#include "reseq/parameter.hpp"

namespace reseq {

enum class EmbeddingTable { UActive, UPassive, VActive, VPassive };

inline const char* embedding_table_name(EmbeddingTable t) {
  switch (t) {
    case EmbeddingTable::UActive: return "u_active";
    case EmbeddingTable::UPassive: return "u_passive";
    case EmbeddingTable::VActive: return "v_active";
    case EmbeddingTable::VPassive: return "v_passive";
  }
  return "?";
}

// Dual-perspective user embeddings. In the shared parameterization the four
// logical tables are factor products with cross-perspective cores: one side's
// active table and the other side's passive table share a core, aligning the
// spaces that get matched against each other. With sharing disabled the four
// tables are free.
//
//   u_active  = A_u * C1      v_passive = B_v * C1
//   v_active  = A_v * C2      u_passive = B_u * C2
template <typename Real>
struct EmbeddingSet {
  using Ref = typename Graph<Real>::Ref;

  bool shared = true;
  int d = 0;
  int d_prime = 0;
  int a_u = -1, b_v = -1, c1 = -1;
  int a_v = -1, b_u = -1, c2 = -1;
  int free_table[4] = {-1, -1, -1, -1};

  static EmbeddingSet build(ParameterStore<Real>& params, int users_u, int users_v, int d,
                            int d_prime, bool share, Rng& rng, Real init_std) {
    auto normal = [&](int r, int c) {
      Tensor<Real> t(r, c);
      for (std::size_t i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<Real>(rng.normal(0.0, static_cast<double>(init_std)));
      return t;
    };
    EmbeddingSet set;
    set.shared = share;
    set.d = d;
    set.d_prime = d_prime;
    if (share) {
      set.a_u = params.add("emb.a_u", normal(users_u, d_prime));
      set.b_v = params.add("emb.b_v", normal(users_v, d_prime));
      set.c1 = params.add("emb.c1", normal(d_prime, d));
      set.a_v = params.add("emb.a_v", normal(users_v, d_prime));
      set.b_u = params.add("emb.b_u", normal(users_u, d_prime));
      set.c2 = params.add("emb.c2", normal(d_prime, d));
    } else {
      set.free_table[0] = params.add("emb.m_u_p", normal(users_u, d));
      set.free_table[1] = params.add("emb.m_u_f", normal(users_u, d));
      set.free_table[2] = params.add("emb.m_v_p", normal(users_v, d));
      set.free_table[3] = params.add("emb.m_v_f", normal(users_v, d));
    }
    return set;
  }

  // The table holding a user's own embedding for the given role.
  static EmbeddingTable own_table(Side side, Perspective perspective) {
    if (side == Side::U)
      return perspective == Perspective::Active ? EmbeddingTable::UActive : EmbeddingTable::UPassive;
    return perspective == Perspective::Active ? EmbeddingTable::VActive : EmbeddingTable::VPassive;
  }

  // The table sequence events are looked up from: counterparts live on the
  // opposite side, and an active encoding consumes their passive embeddings
  // (and vice versa).
  static EmbeddingTable event_table(Side owner, Perspective encoding) {
    return own_table(opposite(owner), encoding == Perspective::Active ? Perspective::Passive
                                                                      : Perspective::Active);
  }

  Ref rows(Graph<Real>& g, EmbeddingTable table, std::vector<int> users) const {
    if (shared) {
      auto [factor, core] = factor_core(table);
      return g.matmul(g.gather_rows(Graph<Real>::param(factor), std::move(users)),
                      Graph<Real>::param(core));
    }
    return g.gather_rows(Graph<Real>::param(free_id(table)), std::move(users));
  }

  Ref resolve(Graph<Real>& g, Side side, Perspective perspective, int user) const {
    return rows(g, own_table(side, perspective), {user});
  }

  Tensor<Real> rows_value(const ParameterStore<Real>& params, EmbeddingTable table,
                          const std::vector<int>& users) const {
    Graph<Real> g(params);
    return g.value(rows(g, table, users));
  }

  Tensor<Real> resolve_value(const ParameterStore<Real>& params, Side side,
                             Perspective perspective, int user) const {
    return rows_value(params, own_table(side, perspective), {user});
  }

  // Full logical table, for rank checks and tests.
  Tensor<Real> materialize(const ParameterStore<Real>& params, EmbeddingTable table) const {
    if (!shared) return params.value(free_id(table));
    auto [factor, core] = factor_core(table);
    return matmul(params.value(factor), params.value(core));
  }

  std::vector<int> param_ids() const {
    if (shared) return {a_u, b_v, c1, a_v, b_u, c2};
    return {free_table[0], free_table[1], free_table[2], free_table[3]};
  }

 private:
  std::pair<int, int> factor_core(EmbeddingTable table) const {
    switch (table) {
      case EmbeddingTable::UActive: return {a_u, c1};
      case EmbeddingTable::VPassive: return {b_v, c1};
      case EmbeddingTable::VActive: return {a_v, c2};
      case EmbeddingTable::UPassive: return {b_u, c2};
    }
    fail("config", "bad embedding table");
  }

  int free_id(EmbeddingTable table) const {
    switch (table) {
      case EmbeddingTable::UActive: return free_table[0];
      case EmbeddingTable::UPassive: return free_table[1];
      case EmbeddingTable::VActive: return free_table[2];
      case EmbeddingTable::VPassive: return free_table[3];
    }
    fail("config", "bad embedding table");
  }
};

// CLS slot and position table of one encoder stack.
struct InputSlots {
  int cls = -1;
  int pos = -1;
};

// Builds the (s+1) x d encoder input for a truncated sequence: row 0 is the
// CLS embedding plus position 0, row k is the k-th counterpart's embedding
// (under the table dictated by the encoding perspective) plus position k.
// Inputs are compact: padding rows are never materialized, which is
// equivalent to the padded layout because padding positions are masked off
// from every other row and ignored downstream.
template <typename Real>
typename Graph<Real>::Ref assemble_input(Graph<Real>& g, const EmbeddingSet<Real>& emb,
                                         const InputSlots& slots, const BehaviorSequence& seq,
                                         Perspective encoding, int max_len) {
  const int s = seq.length();
  if (s > max_len)
    fail("dimension", "sequence length " + std::to_string(s) + " exceeds max length " +
                          std::to_string(max_len) + "; truncate first");
  auto pos_rows = g.slice_rows(Graph<Real>::param(slots.pos), 0, s + 1);
  typename Graph<Real>::Ref base = Graph<Real>::param(slots.cls);
  if (s > 0) {
    std::vector<int> counterparts;
    counterparts.reserve(static_cast<std::size_t>(s));
    for (const auto& ev : seq.events) counterparts.push_back(ev.counterpart);
    auto events = emb.rows(g, EmbeddingSet<Real>::event_table(seq.side, encoding),
                           std::move(counterparts));
    base = g.vstack(base, events);
  }
  return g.add(base, pos_rows);
}

template <typename Real>
Tensor<Real> assemble_input_value(const ParameterStore<Real>& params,
                                  const EmbeddingSet<Real>& emb, const InputSlots& slots,
                                  const BehaviorSequence& seq, Perspective encoding,
                                  int max_len) {
  Graph<Real> g(params);
  return g.value(assemble_input(g, emb, slots, seq, encoding, max_len));
}

}  // namespace reseq
