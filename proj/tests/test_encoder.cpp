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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "reseq/encoder.hpp"
#include "reseq/model.hpp"

using namespace reseq;

namespace {

Tensor<double> randn(Rng& rng, int r, int c, double scale = 1.0) {
  Tensor<double> t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, scale);
  return t;
}

struct StackFixture {
  ParameterStore<double> params;
  EncoderStackIds stack;
  int d;

  explicit StackFixture(std::uint64_t seed, int d_ = 8, int layers = 2, int heads = 2,
                        int max_len = 8) : d(d_) {
    Rng rng(seed);
    stack = build_encoder_stack(params, "enc", d_, 4 * d_, layers, heads, max_len, rng, 0.4);
  }

  // rows: cls+P0 then events[k]+P(k+1)
  Tensor<double> input_with_cls_front(const std::vector<Tensor<double>>& events) {
    const auto& cls = params.value(stack.cls);
    const auto& pos = params.value(stack.pos);
    Tensor<double> e(static_cast<int>(events.size()) + 1, d);
    for (int j = 0; j < d; ++j) e(0, j) = cls(0, j) + pos(0, j);
    for (std::size_t k = 0; k < events.size(); ++k)
      for (int j = 0; j < d; ++j)
        e(static_cast<int>(k) + 1, j) = events[k](0, j) + pos(static_cast<int>(k) + 1, j);
    return e;
  }
};

}  // namespace

TEST_CASE("unidirectional mask layout") {
  SUBCASE("n=3, valid_len=2") {
    auto m = build_unidirectional_mask(3, 2);
    CHECK(m.well_formed());
    // r0 = {0,1,2}
    CHECK(m.allowed(0, 0));
    CHECK(m.allowed(0, 1));
    CHECK(m.allowed(0, 2));
    CHECK_FALSE(m.allowed(0, 3));
    // r1 = {1}: no CLS column, no future
    CHECK_FALSE(m.allowed(1, 0));
    CHECK(m.allowed(1, 1));
    CHECK_FALSE(m.allowed(1, 2));
    // r2 = {1,2}
    CHECK_FALSE(m.allowed(2, 0));
    CHECK(m.allowed(2, 1));
    CHECK(m.allowed(2, 2));
    CHECK_FALSE(m.allowed(2, 3));
    // r3 = {3}: padding row attends itself only
    CHECK(m.allowed(3, 3));
    CHECK_FALSE(m.allowed(3, 0));
    CHECK_FALSE(m.allowed(3, 1));
    CHECK_FALSE(m.allowed(3, 2));
  }
  SUBCASE("valid_len=0: CLS self-only, pad rows self-only") {
    auto m = build_unidirectional_mask(3, 0);
    CHECK(m.well_formed());
    CHECK(m.allowed(0, 0));
    for (int j = 1; j <= 3; ++j) CHECK_FALSE(m.allowed(0, j));
    for (int i = 1; i <= 3; ++i)
      for (int j = 0; j <= 3; ++j) CHECK(m.allowed(i, j) == (i == j));
  }
}

TEST_CASE("bidirectional mask layout") {
  SUBCASE("n=2, valid_len=2: full 3x3 block") {
    auto m = build_bidirectional_mask(2, 2);
    CHECK(m.well_formed());
    for (int i = 0; i <= 2; ++i)
      for (int j = 0; j <= 2; ++j) CHECK(m.allowed(i, j));
  }
  SUBCASE("n=2, valid_len=1") {
    auto m = build_bidirectional_mask(2, 1);
    CHECK(m.well_formed());
    for (int i = 0; i <= 1; ++i)
      for (int j = 0; j <= 1; ++j) CHECK(m.allowed(i, j));
    CHECK(m.allowed(2, 2));
    CHECK_FALSE(m.allowed(2, 0));
    CHECK_FALSE(m.allowed(0, 2));
    CHECK_FALSE(m.allowed(1, 2));
  }
}

TEST_CASE("CLS-front mask is equivalent to CLS appended at the end under a causal mask") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    StackFixture fx(1000 + seed);
    Rng rng(seed * 31 + 7);
    const int s = 1 + static_cast<int>(rng.below(5));
    std::vector<Tensor<double>> events;
    for (int k = 0; k < s; ++k) events.push_back(randn(rng, 1, fx.d));

    auto input_a = fx.input_with_cls_front(events);
    auto out_a = encode(fx.params, fx.stack, input_a, build_unidirectional_mask(s, s));

    // same embeddings, CLS moved to the end, plain causal mask
    Tensor<double> input_b(s + 1, fx.d);
    const auto& cls = fx.params.value(fx.stack.cls);
    const auto& pos = fx.params.value(fx.stack.pos);
    for (int k = 0; k < s; ++k)
      for (int j = 0; j < fx.d; ++j) input_b(k, j) = events[static_cast<std::size_t>(k)](0, j) + pos(k + 1, j);
    for (int j = 0; j < fx.d; ++j) input_b(s, j) = cls(0, j) + pos(0, j);
    auto causal = AttentionMask::custom(s + 1, [](int i, int j) { return j <= i; });

    Graph<double> g(fx.params);
    auto refs = encode_graph(g, fx.stack, g.constant(input_b), causal);
    const auto& hidden_b = g.value(refs.hidden);

    for (int j = 0; j < fx.d; ++j)
      CHECK(out_a.macro(0, j) == doctest::Approx(hidden_b(s, j)).epsilon(1e-6));
    // event rows line up too (shifted by one)
    for (int k = 0; k < s; ++k)
      for (int j = 0; j < fx.d; ++j)
        CHECK(out_a.micro(k, j) == doctest::Approx(hidden_b(k, j)).epsilon(1e-6));
  }
}

TEST_CASE("causality: perturbing a future event leaves earlier micro rows unchanged") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    StackFixture fx(2000 + seed);
    Rng rng(500 + seed);
    const int s = 5;
    std::vector<Tensor<double>> events;
    for (int k = 0; k < s; ++k) events.push_back(randn(rng, 1, fx.d));
    auto base = encode(fx.params, fx.stack, fx.input_with_cls_front(events),
                       build_unidirectional_mask(s, s));
    for (int j = 2; j <= s; ++j) {  // perturb event at position j (1-based)
      auto perturbed = events;
      perturbed[static_cast<std::size_t>(j - 1)] = randn(rng, 1, fx.d);
      auto out = encode(fx.params, fx.stack, fx.input_with_cls_front(perturbed),
                        build_unidirectional_mask(s, s));
      for (int i = 1; i < j; ++i)  // positions strictly before j
        for (int c = 0; c < fx.d; ++c)
          CHECK(std::abs(out.micro(i - 1, c) - base.micro(i - 1, c)) < 1e-9);
      // the perturbed row itself must move
      double delta = 0;
      for (int c = 0; c < fx.d; ++c) delta += std::abs(out.micro(j - 1, c) - base.micro(j - 1, c));
      CHECK(delta > 1e-6);
    }
  }
}

TEST_CASE("padding invariance: growing n leaves macro and valid micro rows unchanged") {
  StackFixture fx(3000);
  Rng rng(9);
  const int s = 3;
  std::vector<Tensor<double>> events;
  for (int k = 0; k < s; ++k) events.push_back(randn(rng, 1, fx.d));
  auto compact_in = fx.input_with_cls_front(events);

  for (Perspective persp : {Perspective::Active, Perspective::Passive}) {
    auto mask_small = persp == Perspective::Active ? build_unidirectional_mask(s, s)
                                                   : build_bidirectional_mask(s, s);
    auto compact = encode(fx.params, fx.stack, compact_in, mask_small);

    for (int n : {5, 7}) {
      Tensor<double> padded(n + 1, fx.d);
      const auto& pos = fx.params.value(fx.stack.pos);
      for (int i = 0; i <= s; ++i)
        for (int j = 0; j < fx.d; ++j) padded(i, j) = compact_in(i, j);
      for (int i = s + 1; i <= n; ++i)
        for (int j = 0; j < fx.d; ++j) padded(i, j) = pos(i, j);  // zero event + position
      auto mask_big = persp == Perspective::Active ? build_unidirectional_mask(n, s)
                                                   : build_bidirectional_mask(n, s);
      auto padded_out = encode(fx.params, fx.stack, padded, mask_big);
      for (int j = 0; j < fx.d; ++j)
        CHECK(std::abs(padded_out.macro(0, j) - compact.macro(0, j)) < 1e-9);
      for (int k = 0; k < s; ++k)
        for (int j = 0; j < fx.d; ++j)
          CHECK(std::abs(padded_out.micro(k, j) - compact.micro(k, j)) < 1e-9);
    }
  }
}

TEST_CASE("bidirectional encodings: order blind at the CLS with zeroed positions") {
  StackFixture fx(4000);
  fx.params.mutable_value(fx.stack.pos).zero();
  Rng rng(77);
  const int s = 4;
  std::vector<Tensor<double>> events;
  for (int k = 0; k < s; ++k) events.push_back(randn(rng, 1, fx.d));
  auto swapped = events;
  std::swap(swapped[1], swapped[3]);

  auto a = encode(fx.params, fx.stack, fx.input_with_cls_front(events),
                  build_bidirectional_mask(s, s));
  auto b = encode(fx.params, fx.stack, fx.input_with_cls_front(swapped),
                  build_bidirectional_mask(s, s));
  for (int j = 0; j < fx.d; ++j) CHECK(a.macro(0, j) == doctest::Approx(b.macro(0, j)).epsilon(1e-6));
  // micro rows permute with the events
  for (int j = 0; j < fx.d; ++j) {
    CHECK(a.micro(1, j) == doctest::Approx(b.micro(3, j)).epsilon(1e-6));
    CHECK(a.micro(3, j) == doctest::Approx(b.micro(1, j)).epsilon(1e-6));
    CHECK(a.micro(0, j) == doctest::Approx(b.micro(0, j)).epsilon(1e-6));
  }
}

TEST_CASE("bidirectional micro rows react to any valid event change") {
  int detected = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    StackFixture fx(5000 + static_cast<std::uint64_t>(t));
    Rng rng(900 + static_cast<std::uint64_t>(t));
    const int s = 4;
    std::vector<Tensor<double>> events;
    for (int k = 0; k < s; ++k) events.push_back(randn(rng, 1, fx.d));
    auto base = encode(fx.params, fx.stack, fx.input_with_cls_front(events),
                       build_bidirectional_mask(s, s));
    auto perturbed = events;
    int target = static_cast<int>(rng.below(s));
    perturbed[static_cast<std::size_t>(target)] = randn(rng, 1, fx.d);
    auto out = encode(fx.params, fx.stack, fx.input_with_cls_front(perturbed),
                      build_bidirectional_mask(s, s));
    bool all_changed = true;
    for (int k = 0; k < s; ++k) {
      double delta = 0;
      for (int j = 0; j < fx.d; ++j) delta += std::abs(out.micro(k, j) - base.micro(k, j));
      all_changed = all_changed && delta > 1e-12;
    }
    if (all_changed) ++detected;
  }
  CHECK(detected >= 99);
}

TEST_CASE("empty sequence: macro depends only on the CLS slot, never on event tables") {
  TrainingConfig cfg;
  cfg.d = 8;
  cfg.d_prime = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.max_seq_len = 4;
  cfg.dropout = 0.0;
  auto model = Model<double>::build(cfg, 3, 3);
  BehaviorSequence empty;
  empty.owner = 0;
  empty.side = Side::U;
  auto before = model.encode_sequence(empty, Perspective::Active);
  REQUIRE(before.valid_len == 0);
  CHECK_FALSE(before.has_micro());
  // scrambling every embedding table must not move the CLS-only macro
  for (int id : model.emb.param_ids()) {
    auto& t = model.params.mutable_value(id);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] += 3.25;
  }
  auto after = model.encode_sequence(empty, Perspective::Active);
  for (int j = 0; j < 8; ++j) CHECK(after.macro(0, j) == before.macro(0, j));
}

TEST_CASE("the four stacks share no parameters") {
  TrainingConfig cfg;
  cfg.d = 8;
  cfg.d_prime = 4;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.max_seq_len = 6;
  auto model = Model<double>::build(cfg, 4, 4);
  std::set<int> seen;
  std::size_t total = 0;
  for (const auto& stack : model.stacks) {
    auto ids = stack.param_ids();
    total += ids.size();
    seen.insert(ids.begin(), ids.end());
  }
  CHECK(seen.size() == total);  // pairwise disjoint
  for (int id : model.emb.param_ids()) CHECK(seen.count(id) == 0);
  CHECK(seen.count(model.alpha_uv) == 0);
  CHECK(seen.count(model.alpha_vu) == 0);
}

TEST_CASE("encoder gradient passes the finite difference check") {
  ParameterStore<double> params;
  Rng rng(61);
  auto stack = build_encoder_stack(params, "enc", 4, 8, 1, 2, 3, rng, 0.4);
  int input_id = params.add("input", randn(rng, 4, 4, 0.7));
  auto mask = build_unidirectional_mask(3, 3);

  GradBuffer<double> buf(params);
  Tensor<double> w_macro = randn(rng, 1, 4);
  Tensor<double> w_micro = randn(rng, 3, 4);
  auto loss_fn = [&](bool with_grad) -> double {
    Graph<double> g(params, with_grad ? &buf : nullptr);
    auto refs = encode_graph(g, stack, Graph<double>::param(input_id), mask);
    auto loss = g.add(g.sum(g.mul(refs.macro, g.constant(w_macro))),
                      g.sum(g.mul(refs.micro, g.constant(w_micro))));
    double v = g.value(loss).scalar();
    if (with_grad) {
      buf.clear();
      g.backward(loss);
      buf.add_into_store(params);
    }
    return v;
  };
  auto report = finite_diff_check<double>(params, loss_fn, 1e-4, 1e-4);
  INFO(report.summary());
  CHECK(report.pass);
}

TEST_CASE("non-finite activations are reported with the layer") {
  StackFixture fx(6000);
  auto& wq = fx.params.mutable_value(fx.stack.layers[1].wq);
  wq(0, 0) = std::numeric_limits<double>::infinity();
  Rng rng(3);
  std::vector<Tensor<double>> events{randn(rng, 1, fx.d), randn(rng, 1, fx.d)};
  try {
    encode(fx.params, fx.stack, fx.input_with_cls_front(events), build_unidirectional_mask(2, 2));
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == "nonfinite");
    CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
  }
}
