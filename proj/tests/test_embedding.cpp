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

#include "reseq/embedding.hpp"
#include "support/oracles.hpp"

using namespace reseq;

namespace {

EmbeddingSet<double> tiny_set(ParameterStore<double>& params, bool shared, int users = 3,
                              int d = 2, int d_prime = 2, std::uint64_t seed = 3) {
  Rng rng(seed);
  return EmbeddingSet<double>::build(params, users, users, d, d_prime, shared, rng, 0.5);
}

}  // namespace

TEST_CASE("resolve_embedding is the factor row times the shared core") {
  ParameterStore<double> params;
  auto set = tiny_set(params, true);

  SUBCASE("identity core returns the factor row") {
    params.mutable_value(set.c1) = Tensor<double>::matrix(2, 2, {1, 0, 0, 1});
    params.mutable_value(set.a_u) = Tensor<double>::matrix(3, 2, {1, 0, 0, 1, 2, 3});
    auto e = set.resolve_value(params, Side::U, Perspective::Active, 0);
    CHECK(e(0, 0) == 1.0);
    CHECK(e(0, 1) == 0.0);
  }
  SUBCASE("zero factor row gives the zero vector") {
    params.mutable_value(set.a_u) = Tensor<double>::matrix(3, 2, {0, 0, 1, 1, 2, 3});
    auto e = set.resolve_value(params, Side::U, Perspective::Active, 0);
    CHECK(e(0, 0) == 0.0);
    CHECK(e(0, 1) == 0.0);
  }
  SUBCASE("hand product [1,2] x [[1,0],[1,1]] = [3,2]") {
    params.mutable_value(set.a_u) = Tensor<double>::matrix(3, 2, {1, 2, 0, 0, 0, 0});
    params.mutable_value(set.c1) = Tensor<double>::matrix(2, 2, {1, 0, 1, 1});
    auto e = set.resolve_value(params, Side::U, Perspective::Active, 0);
    CHECK(e(0, 0) == 3.0);
    CHECK(e(0, 1) == 2.0);
  }
  SUBCASE("unknown user errors") {
    Graph<double> g(params);
    CHECK_THROWS_AS(set.resolve(g, Side::U, Perspective::Active, 99), Error);
  }
}

TEST_CASE("cross-perspective core sharing follows the decomposition") {
  ParameterStore<double> params;
  auto set = tiny_set(params, true);
  // u_active and v_passive share c1; v_active and u_passive share c2
  auto mu_p = set.materialize(params, EmbeddingTable::UActive);
  auto mv_f = set.materialize(params, EmbeddingTable::VPassive);
  auto expect_u = matmul(params.value(set.a_u), params.value(set.c1));
  auto expect_v = matmul(params.value(set.b_v), params.value(set.c1));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      CHECK(mu_p(i, j) == expect_u(i, j));
      CHECK(mv_f(i, j) == expect_v(i, j));
    }
}

TEST_CASE("stacked shared tables have rank at most d_prime") {
  ParameterStore<double> params;
  Rng rng(17);
  auto set = EmbeddingSet<double>::build(params, 8, 8, 4, 2, true, rng, 1.0);
  auto mu_p = set.materialize(params, EmbeddingTable::UActive);  // 8 x 4
  auto mv_f = set.materialize(params, EmbeddingTable::VPassive);
  Tensor<double> stacked(16, 4);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 4; ++j) {
      stacked(i, j) = mu_p(i, j);
      stacked(8 + i, j) = mv_f(i, j);
    }
  CHECK(oracles::numerical_rank(stacked) <= 2);

  // free tables are generically full rank
  ParameterStore<double> params2;
  auto free_set = EmbeddingSet<double>::build(params2, 8, 8, 4, 2, false, rng, 1.0);
  auto fu = free_set.materialize(params2, EmbeddingTable::UActive);
  auto fv = free_set.materialize(params2, EmbeddingTable::VPassive);
  Tensor<double> stacked2(16, 4);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 4; ++j) {
      stacked2(i, j) = fu(i, j);
      stacked2(8 + i, j) = fv(i, j);
    }
  CHECK(oracles::numerical_rank(stacked2) == 4);
}

TEST_CASE("event table wiring: active encodings read the opposite side's passive table") {
  using ES = EmbeddingSet<double>;
  CHECK(ES::event_table(Side::U, Perspective::Active) == EmbeddingTable::VPassive);
  CHECK(ES::event_table(Side::U, Perspective::Passive) == EmbeddingTable::VActive);
  CHECK(ES::event_table(Side::V, Perspective::Active) == EmbeddingTable::UPassive);
  CHECK(ES::event_table(Side::V, Perspective::Passive) == EmbeddingTable::UActive);
  CHECK(ES::own_table(Side::U, Perspective::Active) == EmbeddingTable::UActive);
  CHECK(ES::own_table(Side::V, Perspective::Passive) == EmbeddingTable::VPassive);
}

namespace {

Tensor<double> randn(Rng& rng, int r, int c) {
  Tensor<double> t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("assemble_input") {
  ParameterStore<double> params;
  auto set = tiny_set(params, true);
  Rng rng(5);
  const int max_len = 4;
  InputSlots slots;
  slots.cls = params.add("cls", randn(rng, 1, 2));
  slots.pos = params.add("pos", randn(rng, max_len + 1, 2));

  BehaviorSequence seq;
  seq.owner = 0;
  seq.side = Side::U;

  SUBCASE("empty sequence: only the CLS row, shifted by position 0") {
    auto e = assemble_input_value(params, set, slots, seq, Perspective::Active, max_len);
    REQUIRE(e.rows() == 1);
    const auto& cls = params.value(slots.cls);
    const auto& pos = params.value(slots.pos);
    CHECK(e(0, 0) == doctest::Approx(cls(0, 0) + pos(0, 0)));
    CHECK(e(0, 1) == doctest::Approx(cls(0, 1) + pos(0, 1)));
  }

  SUBCASE("one event: row 1 is the dictated-table embedding plus position 1") {
    seq.events = {{3, 1}};  // counterpart v index 1
    auto e = assemble_input_value(params, set, slots, seq, Perspective::Active, max_len);
    REQUIRE(e.rows() == 2);
    // active encoding of a U sequence reads the V passive table
    auto expect = set.rows_value(params, EmbeddingTable::VPassive, {1});
    const auto& pos = params.value(slots.pos);
    CHECK(e(1, 0) == doctest::Approx(expect(0, 0) + pos(1, 0)));
    CHECK(e(1, 1) == doctest::Approx(expect(0, 1) + pos(1, 1)));
  }

  SUBCASE("perspective flip changes the event rows") {
    seq.events = {{3, 1}, {5, 2}};
    auto active = assemble_input_value(params, set, slots, seq, Perspective::Active, max_len);
    auto passive = assemble_input_value(params, set, slots, seq, Perspective::Passive, max_len);
    bool any_diff = false;
    for (int i = 1; i < active.rows(); ++i)
      for (int j = 0; j < active.cols(); ++j)
        if (active(i, j) != passive(i, j)) any_diff = true;
    CHECK(any_diff);
  }

  SUBCASE("sequence longer than max_len errors") {
    seq.events = {{1, 0}, {2, 1}, {3, 2}, {4, 0}, {5, 1}};
    CHECK_THROWS_AS(assemble_input_value(params, set, slots, seq, Perspective::Active, max_len),
                    Error);
  }
}
