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

#include <cmath>

#include "reseq/graph.hpp"
#include "reseq/numerics.hpp"
#include "reseq/parameter.hpp"
#include "reseq/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace reseq;
using gradcheck::check_graph_gradient;
using gradcheck::project_to_scalar;
using gradcheck::random_tensor;

namespace {
using Ref = Graph<double>::Ref;
}

TEST_CASE("tensor shapes and matmul against naive loops") {
  Rng rng(11);
  auto a = random_tensor(rng, 3, 4);
  auto b = random_tensor(rng, 4, 5);
  auto c = matmul(a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) acc += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }

  auto at = random_tensor(rng, 4, 3);
  auto bt = random_tensor(rng, 5, 4);
  auto c2 = matmul(at, b, true, false);
  auto c3 = matmul(a, bt, false, true);
  auto c4 = matmul(at, bt, true, true);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double e2 = 0, e3 = 0, e4 = 0;
      for (int k = 0; k < 4; ++k) {
        e2 += at(k, i) * b(k, j);
        e3 += a(i, k) * bt(j, k);
        e4 += at(k, i) * bt(j, k);
      }
      CHECK(c2(i, j) == doctest::Approx(e2).epsilon(1e-12));
      CHECK(c3(i, j) == doctest::Approx(e3).epsilon(1e-12));
      CHECK(c4(i, j) == doctest::Approx(e4).epsilon(1e-12));
    }

  CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("masked_row_softmax examples") {
  SUBCASE("uniform logits") {
    auto out = masked_row_softmax<double>({0, 0, 0}, {true, true, true});
    for (double p : out) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("single support") {
    auto out = masked_row_softmax<double>({5, 7}, {true, false});
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 0.0);
  }
  SUBCASE("1,2,3 against the exp-normalize oracle") {
    auto out = masked_row_softmax<double>({1, 2, 3}, {true, true, true});
    CHECK(out[0] == doctest::Approx(0.090031).epsilon(1e-5));
    CHECK(out[1] == doctest::Approx(0.244728).epsilon(1e-5));
    CHECK(out[2] == doctest::Approx(0.665241).epsilon(1e-5));
    auto expect = oracles::softmax_oracle({1, 2, 3}, {true, true, true});
    for (int i = 0; i < 3; ++i) CHECK(out[static_cast<std::size_t>(i)] ==
                                      doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
  SUBCASE("all-invalid input errors") {
    CHECK_THROWS_WITH_AS(masked_row_softmax<double>({1, 2}, {false, false}),
                         "empty attention support", Error);
  }
  SUBCASE("extreme logits stay finite") {
    auto out = masked_row_softmax<double>({1000, 999}, {true, true});
    CHECK(out[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  }
}

TEST_CASE("masked_row_softmax properties over random inputs") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 1 + static_cast<int>(rng.below(12));
    std::vector<double> logits(static_cast<std::size_t>(n));
    std::vector<bool> valid(static_cast<std::size_t>(n));
    bool any = false;
    for (int i = 0; i < n; ++i) {
      logits[static_cast<std::size_t>(i)] = rng.normal(0, 5);
      valid[static_cast<std::size_t>(i)] = rng.uniform() < 0.6;
      any = any || valid[static_cast<std::size_t>(i)];
    }
    if (!any) valid[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)))] = true;
    auto out = masked_row_softmax(logits, valid);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      CHECK(out[static_cast<std::size_t>(i)] >= 0.0);
      if (!valid[static_cast<std::size_t>(i)]) CHECK(out[static_cast<std::size_t>(i)] == 0.0);
      sum += out[static_cast<std::size_t>(i)];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("attention mask invariants") {
  AttentionMask m(5, 3);
  CHECK_FALSE(m.well_formed());  // empty rows until set
  CHECK_THROWS_AS(AttentionMask(3, 4), Error);
}

TEST_CASE("adam examples") {
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;

  SUBCASE("zero gradient leaves the parameter unchanged") {
    Parameter<double> p;
    p.name = "w";
    p.value = Tensor<double>::vector({1.5, -2.0});
    p.grad = p.value;
    p.grad.zero();
    p.moment1 = p.grad;
    p.moment2 = p.grad;
    adam_step(p, cfg);
    CHECK(p.value(0) == 1.5);
    CHECK(p.value(1) == -2.0);
    CHECK(p.step == 1);
  }

  SUBCASE("first step moves by about -lr * sign(g)") {
    Parameter<double> p;
    p.name = "w";
    p.value = Tensor<double>::vector({0.0, 0.0});
    p.grad = Tensor<double>::vector({0.37, -4.2});
    p.moment1 = Tensor<double>(2);
    p.moment2 = Tensor<double>(2);
    adam_step(p, cfg);
    CHECK(p.value(0) == doctest::Approx(-0.1).epsilon(1e-4));
    CHECK(p.value(1) == doctest::Approx(0.1).epsilon(1e-4));
  }

  SUBCASE("two-step trace matches the hand-computed moment recursion") {
    // Hand recursion with g1=1, g2=-1, lr=0.1, betas (0.9, 0.999), eps 1e-8.
    Parameter<double> p;
    p.name = "w";
    p.value = Tensor<double>::vector({0.0});
    p.grad = Tensor<double>::vector({1.0});
    p.moment1 = Tensor<double>(1);
    p.moment2 = Tensor<double>(1);
    adam_step(p, cfg);
    double m = 0.1, v = 0.001;
    double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
    double x = 0.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(p.value(0) == doctest::Approx(x).epsilon(1e-10));

    p.grad = Tensor<double>::vector({-1.0});
    adam_step(p, cfg);
    m = 0.9 * m + 0.1 * (-1.0);
    v = 0.999 * v + 0.001 * 1.0;
    mhat = m / (1 - 0.9 * 0.9);
    vhat = v / (1 - 0.999 * 0.999);
    x = x - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(p.value(0) == doctest::Approx(x).epsilon(1e-10));
  }

  SUBCASE("weight decay acts as L2 on the gradient") {
    Parameter<double> p;
    p.name = "w";
    p.value = Tensor<double>::vector({2.0});
    p.grad = Tensor<double>::vector({0.0});
    p.moment1 = Tensor<double>(1);
    p.moment2 = Tensor<double>(1);
    AdamConfig wd = cfg;
    wd.weight_decay = 0.5;
    adam_step(p, wd);
    // effective gradient 1.0: identical to the first-step rule
    CHECK(p.value(0) == doctest::Approx(2.0 - 0.1).epsilon(1e-4));
  }

  SUBCASE("non-finite gradient names the parameter") {
    Parameter<double> p;
    p.name = "emb.core";
    p.value = Tensor<double>::vector({1.0});
    p.grad = Tensor<double>::vector({std::numeric_limits<double>::quiet_NaN()});
    p.moment1 = Tensor<double>(1);
    p.moment2 = Tensor<double>(1);
    try {
      adam_step(p, cfg);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("emb.core") != std::string::npos);
    }
  }

  SUBCASE("deterministic given identical state and gradient") {
    auto run = [&] {
      Parameter<double> p;
      p.name = "w";
      p.value = Tensor<double>::vector({0.3, -0.7});
      p.grad = Tensor<double>::vector({0.11, 0.22});
      p.moment1 = Tensor<double>(2);
      p.moment2 = Tensor<double>(2);
      adam_step(p, cfg);
      adam_step(p, cfg);
      return std::make_pair(p.value(0), p.value(1));
    };
    auto a = run();
    auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }
}

TEST_CASE("finite_diff_check on scalar functions") {
  SUBCASE("theta^2 at 3") {
    ParameterStore<double> store;
    store.add("theta", Tensor<double>::vector({3.0}));
    GradBuffer<double> buf(store);
    auto loss = [&](bool with_grad) -> double {
      Graph<double> g(store, with_grad ? &buf : nullptr);
      auto theta = Graph<double>::param(0);
      auto l = g.sum(g.square(theta));
      if (with_grad) {
        buf.clear();
        g.backward(l);
        buf.add_into_store(store);
      }
      return g.value(l).scalar();
    };
    auto report = finite_diff_check<double>(store, loss, 1e-4, 1e-4);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-8);
    CHECK(store.at(0).grad(0) == doctest::Approx(6.0).epsilon(1e-12));
  }

  SUBCASE("constant loss passes by absolute comparison") {
    ParameterStore<double> store;
    store.add("theta", Tensor<double>::vector({1.0, 2.0}));
    auto loss = [&](bool) -> double { return 42.0; };
    auto report = finite_diff_check<double>(store, loss, 1e-4, 1e-4);
    CHECK(report.pass);
    CHECK(report.max_rel_err == 0.0);
  }

  SUBCASE("non-finite loss errors") {
    ParameterStore<double> store;
    store.add("theta", Tensor<double>::vector({1.0}));
    auto loss = [&](bool) -> double { return std::numeric_limits<double>::infinity(); };
    CHECK_THROWS_AS(finite_diff_check<double>(store, loss, 1e-4, 1e-4), Error);
  }
}

TEST_CASE("graph op gradients match central differences") {
  Rng rng(31);

  SUBCASE("matmul, all transpose combinations") {
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb) {
        auto a = ta ? random_tensor(rng, 4, 3) : random_tensor(rng, 3, 4);
        auto b = tb ? random_tensor(rng, 5, 4) : random_tensor(rng, 4, 5);
        auto report = check_graph_gradient({a, b}, [&](Graph<double>& g, const auto& refs) {
          return project_to_scalar(g, g.matmul(refs[0], refs[1], ta == 1, tb == 1));
        });
        INFO("ta=", ta, " tb=", tb, "\n", report.summary());
        CHECK(report.pass);
      }
  }

  SUBCASE("add, sub, mul, scale, add_scaled, add_row_broadcast") {
    auto a = random_tensor(rng, 3, 4);
    auto b = random_tensor(rng, 3, 4);
    auto row = random_tensor(rng, 1, 4);
    auto report = check_graph_gradient({a, b, row}, [&](Graph<double>& g, const auto& refs) {
      auto x = g.add(refs[0], refs[1]);
      x = g.sub(x, g.scale(refs[1], 0.5));
      x = g.mul(x, refs[0]);
      x = g.add_row_broadcast(x, refs[2]);
      x = g.add_scaled({{0.25, x}, {-1.5, refs[0]}});
      return project_to_scalar(g, x);
    });
    INFO(report.summary());
    CHECK(report.pass);
  }

  SUBCASE("relu, gelu, square, softplus, sum") {
    Tensor<double> a = random_tensor(rng, 4, 4);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::abs(a.data()[i]) < 0.05) a.data()[i] = 0.2;  // keep clear of the relu kink
    auto report = check_graph_gradient({a}, [&](Graph<double>& g, const auto& refs) {
      auto x = g.relu(refs[0]);
      x = g.add(g.square(x), g.softplus(refs[0]));
      x = g.add(x, g.gelu(refs[0]));
      return g.sum(x);
    });
    INFO(report.summary());
    CHECK(report.pass);
  }

  SUBCASE("gather_rows with repeated indices scatter-adds") {
    auto table = random_tensor(rng, 6, 3);
    auto report = check_graph_gradient({table}, [&](Graph<double>& g, const auto& refs) {
      return project_to_scalar(g, g.gather_rows(refs[0], {0, 2, 2, 5, 0}));
    });
    INFO(report.summary());
    CHECK(report.pass);
  }

  SUBCASE("slices, concat, vstack") {
    auto a = random_tensor(rng, 4, 6);
    auto b = random_tensor(rng, 2, 6);
    auto report = check_graph_gradient({a, b}, [&](Graph<double>& g, const auto& refs) {
      auto stacked = g.vstack(refs[0], refs[1]);
      auto left = g.slice_cols(stacked, 0, 3);
      auto right = g.slice_cols(stacked, 3, 6);
      auto swapped = g.concat_cols(right, left);
      auto some_rows = g.slice_rows(swapped, 1, 5);
      return project_to_scalar(g, some_rows);
    });
    INFO(report.summary());
    CHECK(report.pass);
  }

  SUBCASE("masked softmax rows under both mask kinds") {
    for (int bidirectional = 0; bidirectional < 2; ++bidirectional) {
      auto scores = random_tensor(rng, 5, 5);
      AttentionMask mask(4, 2);
      for (int i = 0; i <= 4; ++i)
        for (int j = 0; j <= 4; ++j) {
          bool in_block = i <= 2 && j <= 2;
          bool causal = (i == 0 && j <= 2) || (i >= 1 && i <= 2 && j >= 1 && j <= i);
          mask.set(i, j, (bidirectional ? in_block : causal) || i == j);
        }
      auto report = check_graph_gradient({scores}, [&](Graph<double>& g, const auto& refs) {
        return project_to_scalar(g, g.masked_softmax_rows(refs[0], mask));
      });
      INFO(report.summary());
      CHECK(report.pass);
    }
  }

  SUBCASE("softmax_vec") {
    auto v = random_tensor(rng, 6, 1);
    auto report = check_graph_gradient({v}, [&](Graph<double>& g, const auto& refs) {
      return project_to_scalar(g, g.softmax_vec(refs[0]));
    });
    INFO(report.summary());
    CHECK(report.pass);
  }

  SUBCASE("layer norm") {
    auto x = random_tensor(rng, 4, 6);
    auto gain = random_tensor(rng, 1, 6);
    auto bias = random_tensor(rng, 1, 6);
    auto report = check_graph_gradient({x, gain, bias}, [&](Graph<double>& g, const auto& refs) {
      return project_to_scalar(g, g.layer_norm_rows(refs[0], refs[1], refs[2], 1e-5));
    });
    INFO(report.summary());
    CHECK(report.pass);
  }

  SUBCASE("stop_gradient blocks flow") {
    auto a = random_tensor(rng, 2, 2);
    ParameterStore<double> store;
    store.add("a", a);
    GradBuffer<double> buf(store);
    Graph<double> g(store, &buf);
    auto loss = g.sum(g.square(g.stop_gradient(Graph<double>::param(0))));
    g.backward(loss);
    buf.add_into_store(store);
    for (std::size_t i = 0; i < store.at(0).grad.size(); ++i)
      CHECK(store.at(0).grad.data()[i] == 0.0);
  }

  SUBCASE("dropout scales by the inverse keep rate and masks gradients") {
    ParameterStore<double> store;
    store.add("a", random_tensor(rng, 8, 8));
    GradBuffer<double> buf(store);
    Graph<double> g(store, &buf);
    Rng drop_rng(99);
    auto out = g.dropout(Graph<double>::param(0), 0.5, &drop_rng);
    const auto& x = store.value(0);
    const auto& y = g.value(out);
    int kept = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.data()[i] != 0.0) {
        ++kept;
        CHECK(y.data()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-12));
      }
    }
    CHECK(kept > 10);
    CHECK(kept < 54);
    auto loss = g.sum(out);
    g.backward(loss);
    buf.add_into_store(store);
    for (std::size_t i = 0; i < y.size(); ++i) {
      double expect = y.data()[i] == 0.0 ? 0.0 : 2.0;
      CHECK(store.at(0).grad.data()[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("inference graphs record no backward state") {
  ParameterStore<double> store;
  Rng rng(5);
  store.add("w", random_tensor(rng, 3, 3));
  Graph<double> g(store);
  auto out = g.matmul(Graph<double>::param(0), Graph<double>::param(0));
  CHECK(g.value(out).rows() == 3);
  CHECK_THROWS_AS(g.backward(out), Error);
}
