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

#include <cmath>
#include <string>
#include <vector>

#include "reseq/graph.hpp"
#include "reseq/numerics.hpp"
#include "reseq/parameter.hpp"

namespace reseq {

// CLS row 0 aggregates globally over the real events; event row i attends the
// events up to and including itself, never the CLS column, so information
// still flows strictly forward in time. Padding rows attend only themselves.
// This layout is equivalent to appending the CLS token after the last real
// event under a plain causal mask.
AttentionMask build_unidirectional_mask(int n, int valid_len);

// Rows and columns 0..valid_len (CLS included) attend each other freely;
// padding rows attend only themselves.
AttentionMask build_bidirectional_mask(int n, int valid_len);

struct EncoderLayerIds {
  int wq, bq, wk, bk, wv, bv, wo, bo;
  int w1, b1, w2, b2;
  int ln1_g, ln1_b, ln2_g, ln2_b;
};

struct EncoderStackIds {
  std::string name;
  int cls = -1;
  int pos = -1;
  int heads = 1;
  int d = 0;
  std::vector<EncoderLayerIds> layers;

  std::vector<int> param_ids() const {
    std::vector<int> ids{cls, pos};
    for (const auto& l : layers)
      for (int id : {l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.w1, l.b1, l.w2, l.b2,
                     l.ln1_g, l.ln1_b, l.ln2_g, l.ln2_b})
        ids.push_back(id);
    return ids;
  }
};

// Registers one transformer stack's parameters. Projection and FFN weights
// are N(0, init_std); biases zero; layer-norm gains one. The position table
// covers max_len events plus the CLS slot.
template <typename Real>
EncoderStackIds build_encoder_stack(ParameterStore<Real>& params, const std::string& name, int d,
                                    int d_ff, int layers, int heads, int max_len, Rng& rng,
                                    Real init_std) {
  if (heads <= 0 || d % heads != 0) fail("config", "model width must be divisible by heads");
  auto normal = [&](const std::string& n, int r, int c) {
    Tensor<Real> t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = static_cast<Real>(rng.normal(0.0, static_cast<double>(init_std)));
    return params.add(name + "." + n, std::move(t));
  };
  auto fill = [&](const std::string& n, int r, int c, Real v) {
    Tensor<Real> t(r, c);
    t.fill(v);
    return params.add(name + "." + n, std::move(t));
  };

  EncoderStackIds stack;
  stack.name = name;
  stack.heads = heads;
  stack.d = d;
  stack.cls = normal("cls", 1, d);
  stack.pos = normal("pos", max_len + 1, d);
  for (int l = 0; l < layers; ++l) {
    const std::string p = "l" + std::to_string(l);
    EncoderLayerIds ids{};
    ids.wq = normal(p + ".wq", d, d);
    ids.bq = fill(p + ".bq", 1, d, Real(0));
    ids.wk = normal(p + ".wk", d, d);
    ids.bk = fill(p + ".bk", 1, d, Real(0));
    ids.wv = normal(p + ".wv", d, d);
    ids.bv = fill(p + ".bv", 1, d, Real(0));
    ids.wo = normal(p + ".wo", d, d);
    ids.bo = fill(p + ".bo", 1, d, Real(0));
    ids.w1 = normal(p + ".ffn.w1", d, d_ff);
    ids.b1 = fill(p + ".ffn.b1", 1, d_ff, Real(0));
    ids.w2 = normal(p + ".ffn.w2", d_ff, d);
    ids.b2 = fill(p + ".ffn.b2", 1, d, Real(0));
    ids.ln1_g = fill(p + ".ln1.gain", 1, d, Real(1));
    ids.ln1_b = fill(p + ".ln1.bias", 1, d, Real(0));
    ids.ln2_g = fill(p + ".ln2.gain", 1, d, Real(1));
    ids.ln2_b = fill(p + ".ln2.bias", 1, d, Real(0));
    stack.layers.push_back(ids);
  }
  return stack;
}

template <typename Real>
struct EncoderGraphOutput {
  typename Graph<Real>::Ref hidden;  // full final layer (rows x d)
  typename Graph<Real>::Ref macro;   // row 0
  typename Graph<Real>::Ref micro;   // rows 1..end (unset when the input is CLS-only)
  int valid_len = 0;
  bool has_micro = false;
};

// L transformer layers over `input` ((m x d), m == mask rows): masked
// multi-head self-attention then a position-wise FFN, each followed by a
// residual connection and layer normalization (post-norm ordering). Dropout
// sits on the attention probabilities and on each sublayer output; pass
// dropout 0 (or an inference graph) to disable. Row 0 is the macro output,
// the remaining rows are the micro outputs.
template <typename Real>
EncoderGraphOutput<Real> encode_graph(Graph<Real>& g, const EncoderStackIds& stack,
                                      typename Graph<Real>::Ref input, const AttentionMask& mask,
                                      Real dropout = Real(0), Rng* rng = nullptr) {
  using Ref = typename Graph<Real>::Ref;
  const int m = g.value(input).rows();
  const int d = stack.d;
  if (mask.size() != m) fail("dimension", "mask size does not match encoder input rows");
  if (g.value(input).cols() != d) fail("dimension", "encoder input width mismatch");

  const int heads = stack.heads;
  const int dh = d / heads;
  const Real scale = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));

  Ref h = input;
  int layer_no = 0;
  for (const auto& l : stack.layers) {
    Ref q = g.add_row_broadcast(g.matmul(h, Graph<Real>::param(l.wq)), Graph<Real>::param(l.bq));
    Ref k = g.add_row_broadcast(g.matmul(h, Graph<Real>::param(l.wk)), Graph<Real>::param(l.bk));
    Ref v = g.add_row_broadcast(g.matmul(h, Graph<Real>::param(l.wv)), Graph<Real>::param(l.bv));

    Ref mixed;
    bool first = true;
    for (int t = 0; t < heads; ++t) {
      Ref qt = heads == 1 ? q : g.slice_cols(q, t * dh, (t + 1) * dh);
      Ref kt = heads == 1 ? k : g.slice_cols(k, t * dh, (t + 1) * dh);
      Ref vt = heads == 1 ? v : g.slice_cols(v, t * dh, (t + 1) * dh);
      Ref scores = g.scale(g.matmul(qt, kt, false, true), scale);
      Ref probs = g.masked_softmax_rows(scores, mask);
      probs = g.dropout(probs, dropout, rng);
      Ref ot = g.matmul(probs, vt);
      mixed = first ? ot : g.concat_cols(mixed, ot);
      first = false;
    }
    Ref attn = g.add_row_broadcast(g.matmul(mixed, Graph<Real>::param(l.wo)),
                                   Graph<Real>::param(l.bo));
    attn = g.dropout(attn, dropout, rng);
    h = g.layer_norm_rows(g.add(h, attn), Graph<Real>::param(l.ln1_g),
                          Graph<Real>::param(l.ln1_b), static_cast<Real>(1e-5));

    Ref ff = g.add_row_broadcast(g.matmul(h, Graph<Real>::param(l.w1)), Graph<Real>::param(l.b1));
    ff = g.gelu(ff);
    ff = g.add_row_broadcast(g.matmul(ff, Graph<Real>::param(l.w2)), Graph<Real>::param(l.b2));
    ff = g.dropout(ff, dropout, rng);
    h = g.layer_norm_rows(g.add(h, ff), Graph<Real>::param(l.ln2_g), Graph<Real>::param(l.ln2_b),
                          static_cast<Real>(1e-5));

    ++layer_no;
    if (!g.value(h).all_finite())
      fail("nonfinite", "non-finite activations in layer " + std::to_string(layer_no) + " of " +
                            stack.name);
  }

  EncoderGraphOutput<Real> out;
  out.hidden = h;
  out.macro = g.slice_rows(h, 0, 1);
  out.valid_len = mask.valid_len();
  if (m > 1) {
    out.micro = g.slice_rows(h, 1, m);
    out.has_micro = out.valid_len > 0;
  }
  return out;
}

// Macro (length-d) and micro (valid_len x d) representations of one encoded
// sequence. Built compactly: micro holds exactly the real event rows.
template <typename Real>
struct EncoderOutput {
  Tensor<Real> macro;
  Tensor<Real> micro;
  int valid_len = 0;

  bool has_micro() const { return valid_len > 0; }
};

// Inference forward pass (no dropout, no gradient bookkeeping).
template <typename Real>
EncoderOutput<Real> encode(const ParameterStore<Real>& params, const EncoderStackIds& stack,
                           const Tensor<Real>& input, const AttentionMask& mask) {
  Graph<Real> g(params);
  auto refs = encode_graph<Real>(g, stack, g.constant(input), mask);
  EncoderOutput<Real> out;
  out.macro = g.value(refs.macro);
  out.valid_len = refs.valid_len;
  if (refs.has_micro) out.micro = g.value(refs.micro);
  return out;
}

}  // namespace reseq
