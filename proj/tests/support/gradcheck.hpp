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

#include <functional>
#include <vector>

#include "reseq/graph.hpp"
#include "reseq/parameter.hpp"

namespace gradcheck {

using reseq::GradBuffer;
using reseq::Graph;
using reseq::ParameterStore;
using reseq::Rng;
using reseq::Tensor;

inline Tensor<double> random_tensor(Rng& rng, int r, int c, double scale = 1.0) {
  Tensor<double> t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, scale);
  return t;
}

// Runs central-difference verification of a scalar graph expression built
// from the given leaf tensors (all treated as trainable parameters). `build`
// receives the graph plus one Ref per leaf and returns the scalar loss node.
using BuildFn = std::function<Graph<double>::Ref(Graph<double>&, const std::vector<Graph<double>::Ref>&)>;

inline reseq::FiniteDiffReport check_graph_gradient(const std::vector<Tensor<double>>& leaves,
                                                    const BuildFn& build, double h = 1e-4,
                                                    double tol = 1e-4) {
  ParameterStore<double> store;
  for (std::size_t i = 0; i < leaves.size(); ++i)
    store.add("leaf" + std::to_string(i), leaves[i]);
  GradBuffer<double> buffer(store);

  auto loss_and_grad = [&](bool with_grad) -> double {
    Graph<double> g(store, with_grad ? &buffer : nullptr);
    std::vector<Graph<double>::Ref> refs;
    refs.reserve(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i)
      refs.push_back(Graph<double>::param(static_cast<int>(i)));
    auto loss = build(g, refs);
    double value = g.value(loss).scalar();
    if (with_grad) {
      buffer.clear();
      g.backward(loss);
      buffer.add_into_store(store);
    }
    return value;
  };
  return reseq::finite_diff_check<double>(store, loss_and_grad, h, tol);
}

// Reduces an arbitrary op output to a scalar through a fixed random
// projection, exercising the full Jacobian.
inline Graph<double>::Ref project_to_scalar(Graph<double>& g, Graph<double>::Ref out,
                                            std::uint64_t seed = 0x9e15) {
  const auto& v = g.value(out);
  Rng rng(seed);
  Tensor<double> w = v;
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  return g.sum(g.mul(out, g.constant(std::move(w))));
}

}  // namespace gradcheck
