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
#include <string>

#include "reseq/config.hpp"
#include "reseq/data.hpp"
#include "reseq/embedding.hpp"
#include "reseq/encoder.hpp"
#include "reseq/matching.hpp"

namespace reseq {

// The full two-sided matcher: shared decomposed embeddings, four independent
// transformer stacks (one per side and perspective) and the directional
// relative-time weights.
template <typename Real>
struct Model {
  TrainingConfig cfg;
  int users_u = 0;
  int users_v = 0;
  ParameterStore<Real> params;
  EmbeddingSet<Real> emb;
  std::array<EncoderStackIds, 4> stacks;  // u_active, u_passive, v_active, v_passive
  int alpha_uv = -1;
  int alpha_vu = -1;

  static Model build(const TrainingConfig& cfg, int users_u, int users_v) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    m.users_u = users_u;
    m.users_v = users_v;
    Rng rng(derive_seed(cfg.seed, 0x1217));
    const Real std = static_cast<Real>(cfg.init_std);
    m.emb = EmbeddingSet<Real>::build(m.params, users_u, users_v, cfg.d, cfg.d_prime,
                                      cfg.share_embeddings, rng, std);
    const char* names[4] = {"enc.u_active", "enc.u_passive", "enc.v_active", "enc.v_passive"};
    for (int i = 0; i < 4; ++i)
      m.stacks[static_cast<std::size_t>(i)] =
          build_encoder_stack(m.params, names[i], cfg.d, cfg.effective_d_ff(), cfg.layers,
                              cfg.heads, cfg.max_seq_len, rng, std);
    m.alpha_uv = m.params.add("alpha.uv", Tensor<Real>(cfg.max_seq_len, 1));
    m.alpha_vu = cfg.share_time_weight
                     ? m.alpha_uv
                     : m.params.add("alpha.vu", Tensor<Real>(cfg.max_seq_len, 1));
    return m;
  }

  static std::size_t stack_index(Side side, Perspective perspective) {
    return (side == Side::U ? 0u : 2u) + (perspective == Perspective::Active ? 0u : 1u);
  }

  const EncoderStackIds& stack(Side side, Perspective perspective) const {
    return stacks[stack_index(side, perspective)];
  }

  InputSlots slots(Side side, Perspective perspective) const {
    const auto& st = stack(side, perspective);
    return InputSlots{st.cls, st.pos};
  }

  // Active encodings run under the unidirectional mask unless the ablation
  // forces the bidirectional mask everywhere.
  AttentionMask mask_for(Perspective perspective, int n, int valid_len) const {
    bool causal = perspective == Perspective::Active && cfg.mask_mode == MaskMode::Standard;
    return causal ? build_unidirectional_mask(n, valid_len)
                  : build_bidirectional_mask(n, valid_len);
  }

  int alpha_id(Side active_side) const { return active_side == Side::U ? alpha_uv : alpha_vu; }

  EncoderGraphOutput<Real> encode_sequence_graph(Graph<Real>& g, const BehaviorSequence& seq,
                                                 Perspective perspective, Real dropout = Real(0),
                                                 Rng* rng = nullptr) const {
    const int s = seq.length();
    auto input = assemble_input(g, emb, slots(seq.side, perspective), seq, perspective,
                                cfg.max_seq_len);
    input = g.dropout(input, dropout, rng);  // dropout on the embedding layer too
    AttentionMask mask = mask_for(perspective, s, s);
    return encode_graph(g, stack(seq.side, perspective), input, mask, dropout, rng);
  }

  EncoderOutput<Real> encode_sequence(const BehaviorSequence& seq, Perspective perspective) const {
    Graph<Real> g(params);
    auto refs = encode_sequence_graph(g, seq, perspective);
    EncoderOutput<Real> out;
    out.macro = g.value(refs.macro);
    out.valid_len = refs.valid_len;
    if (refs.has_micro) out.micro = g.value(refs.micro);
    return out;
  }

  // Plain (inference) encoding of one user at horizon T.
  UserEncoding<Real> encode_user(const InteractionStore& store, Side side, int user,
                                 std::int64_t T) const {
    BehaviorSequence seq = store.truncated_sequence(side, user, T, cfg.max_seq_len);
    audit_sequence_before(seq, T);
    return encode_user_sequence(side, user, seq);
  }

  UserEncoding<Real> encode_user_sequence(Side side, int user, const BehaviorSequence& seq) const {
    UserEncoding<Real> enc;
    enc.s = seq.length();
    auto active = encode_sequence(seq, Perspective::Active);
    auto passive = encode_sequence(seq, Perspective::Passive);
    enc.p = std::move(active.macro);
    enc.f = std::move(passive.macro);
    if (enc.s > 0) {
      enc.p_mic = std::move(active.micro);
      enc.f_mic = std::move(passive.micro);
    }
    enc.e_p = emb.resolve_value(params, side, Perspective::Active, user);
    enc.e_f = emb.resolve_value(params, side, Perspective::Passive, user);
    return enc;
  }

  MatchScores<Real> score_pair(const InteractionStore& store, int u, int v, std::int64_t T) const {
    auto eu = encode_user(store, Side::U, u, T);
    auto ev = encode_user(store, Side::V, v, T);
    return pair_scores(eu, ev, params.value(alpha_uv), params.value(alpha_vu),
                       cfg.micro_aggregation);
  }

  std::vector<Tensor<Real>> snapshot_values() const {
    std::vector<Tensor<Real>> vals;
    vals.reserve(static_cast<std::size_t>(params.count()));
    for (int i = 0; i < params.count(); ++i) vals.push_back(params.value(i));
    return vals;
  }

  void restore_values(const std::vector<Tensor<Real>>& vals) {
    if (static_cast<int>(vals.size()) != params.count())
      fail("config", "snapshot size mismatch");
    for (int i = 0; i < params.count(); ++i) params.mutable_value(i) = vals[static_cast<std::size_t>(i)];
  }
};

}  // namespace reseq
