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
#include <memory>
#include <utility>
#include <vector>

#include "reseq/numerics.hpp"
#include "reseq/parameter.hpp"
#include "reseq/tensor.hpp"

namespace reseq {

// Dynamic reverse-mode tape over Tensor values. Parameters stay outside the
// graph: a Ref either names a tape node or points into the ParameterStore,
// and parameter gradients land in a caller-owned GradBuffer so concurrent
// graphs can accumulate into disjoint buffers. Constructed without a buffer,
// the graph records no backward closures (pure inference).
template <typename Real>
class Graph {
 public:
  struct Ref {
    int id = 0;
    bool is_param() const { return id < 0; }
    int param_id() const { return -id - 1; }
  };

  explicit Graph(const ParameterStore<Real>& params, GradBuffer<Real>* grads = nullptr)
      : params_(params), grads_(grads) {
    nodes_.reserve(64);
  }

  static Ref param(int param_id) { return Ref{-param_id - 1}; }

  bool training() const { return grads_ != nullptr; }

  const Tensor<Real>& value(Ref r) const {
    return r.is_param() ? params_.value(r.param_id()) : nodes_[static_cast<std::size_t>(r.id)].value;
  }

  Ref constant(Tensor<Real> t) { return push(std::move(t), false); }

  Ref matmul(Ref a, Ref b, bool ta = false, bool tb = false) {
    Ref out = push(reseq::matmul(value(a), value(b), ta, tb), needs(a) || needs(b));
    if (recording(out)) {
      set_back(out, [this, a, b, ta, tb, out] {
        const Tensor<Real>& g = grad_of(out);
        if (needs(a)) {
          Tensor<Real>& ga = grad_slot(a);
          if (!ta && !tb) matmul_into(ga, g, value(b), false, true, true);
          else if (!ta && tb) matmul_into(ga, g, value(b), false, false, true);
          else if (ta && !tb) matmul_into(ga, value(b), g, false, true, true);
          else matmul_into(ga, value(b), g, true, true, true);
        }
        if (needs(b)) {
          Tensor<Real>& gb = grad_slot(b);
          if (!ta && !tb) matmul_into(gb, value(a), g, true, false, true);
          else if (!ta && tb) matmul_into(gb, g, value(a), true, false, true);
          else if (ta && !tb) matmul_into(gb, value(a), g, false, false, true);
          else matmul_into(gb, g, value(a), true, true, true);
        }
      });
    }
    return out;
  }

  Ref add(Ref a, Ref b) {
    Tensor<Real> t = value(a);
    add_into(t, value(b));
    Ref out = push(std::move(t), needs(a) || needs(b));
    if (recording(out)) {
      set_back(out, [this, a, b, out] {
        const Tensor<Real>& g = grad_of(out);
        if (needs(a)) add_into(grad_slot(a), g);
        if (needs(b)) add_into(grad_slot(b), g);
      });
    }
    return out;
  }

  Ref sub(Ref a, Ref b) {
    Tensor<Real> t = value(a);
    add_into(t, value(b), Real(-1));
    Ref out = push(std::move(t), needs(a) || needs(b));
    if (recording(out)) {
      set_back(out, [this, a, b, out] {
        const Tensor<Real>& g = grad_of(out);
        if (needs(a)) add_into(grad_slot(a), g);
        if (needs(b)) add_into(grad_slot(b), g, Real(-1));
      });
    }
    return out;
  }

  // (m x n) + broadcast of a (1 x n) row.
  Ref add_row_broadcast(Ref a, Ref rowvec) {
    const Tensor<Real>& r = value(rowvec);
    Tensor<Real> t = value(a);
    if (r.rows() != 1 || r.cols() != t.cols()) fail("dimension", "add_row_broadcast shape");
    for (int i = 0; i < t.rows(); ++i) detail::axpy(Real(1), r.row(0), t.row(i), t.cols());
    Ref out = push(std::move(t), needs(a) || needs(rowvec));
    if (recording(out)) {
      set_back(out, [this, a, rowvec, out] {
        const Tensor<Real>& g = grad_of(out);
        if (needs(a)) add_into(grad_slot(a), g);
        if (needs(rowvec)) {
          Tensor<Real>& gr = grad_slot(rowvec);
          for (int i = 0; i < g.rows(); ++i) detail::axpy(Real(1), g.row(i), gr.row(0), g.cols());
        }
      });
    }
    return out;
  }

  Ref scale(Ref a, Real c) {
    Tensor<Real> t = value(a);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] *= c;
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, c, out] { add_into(grad_slot(a), grad_of(out), c); });
    }
    return out;
  }

  // sum_i coeff_i * x_i over same-shaped inputs.
  Ref add_scaled(const std::vector<std::pair<Real, Ref>>& terms) {
    if (terms.empty()) fail("dimension", "add_scaled needs at least one term");
    Tensor<Real> t = value(terms[0].second);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] *= terms[0].first;
    bool ng = needs(terms[0].second);
    for (std::size_t k = 1; k < terms.size(); ++k) {
      add_into(t, value(terms[k].second), terms[k].first);
      ng = ng || needs(terms[k].second);
    }
    Ref out = push(std::move(t), ng);
    if (recording(out)) {
      set_back(out, [this, terms, out] {
        const Tensor<Real>& g = grad_of(out);
        for (const auto& [c, r] : terms)
          if (needs(r)) add_into(grad_slot(r), g, c);
      });
    }
    return out;
  }

  // Elementwise (Hadamard) product of same-shaped inputs.
  Ref mul(Ref a, Ref b) {
    const Tensor<Real>& x = value(a);
    const Tensor<Real>& y = value(b);
    if (!x.same_shape(y)) fail("dimension", "mul shape mismatch");
    Tensor<Real> t = x;
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] *= y.data()[i];
    Ref out = push(std::move(t), needs(a) || needs(b));
    if (recording(out)) {
      set_back(out, [this, a, b, out] {
        const Tensor<Real>& g = grad_of(out);
        if (needs(a)) {
          Tensor<Real>& ga = grad_slot(a);
          const Tensor<Real>& y2 = value(b);
          for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * y2.data()[i];
        }
        if (needs(b)) {
          Tensor<Real>& gb = grad_slot(b);
          const Tensor<Real>& x2 = value(a);
          for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += g.data()[i] * x2.data()[i];
        }
      });
    }
    return out;
  }

  Ref relu(Ref a) {
    Tensor<Real> t = value(a);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = std::max(Real(0), t.data()[i]);
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, out] {
        const Tensor<Real>& g = grad_of(out);
        const Tensor<Real>& x = value(a);
        Tensor<Real>& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x.data()[i] > Real(0)) ga.data()[i] += g.data()[i];
      });
    }
    return out;
  }

  // Exact (erf-based) GELU; smooth everywhere, so finite-difference
  // verification stays clean at any perturbation point.
  Ref gelu(Ref a) {
    Tensor<Real> t = value(a);
    for (std::size_t i = 0; i < t.size(); ++i) {
      Real x = t.data()[i];
      t.data()[i] = Real(0.5) * x * (Real(1) + std::erf(x * Real(0.7071067811865475)));
    }
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, out] {
        const Tensor<Real>& g = grad_of(out);
        const Tensor<Real>& x = value(a);
        Tensor<Real>& ga = grad_slot(a);
        constexpr Real inv_sqrt2 = Real(0.7071067811865475);
        constexpr Real inv_sqrt2pi = Real(0.3989422804014327);
        for (std::size_t i = 0; i < g.size(); ++i) {
          Real xi = x.data()[i];
          Real cdf = Real(0.5) * (Real(1) + std::erf(xi * inv_sqrt2));
          Real pdf = inv_sqrt2pi * std::exp(Real(-0.5) * xi * xi);
          ga.data()[i] += (cdf + xi * pdf) * g.data()[i];
        }
      });
    }
    return out;
  }

  Ref square(Ref a) {
    Tensor<Real> t = value(a);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] *= t.data()[i];
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, out] {
        const Tensor<Real>& g = grad_of(out);
        const Tensor<Real>& x = value(a);
        Tensor<Real>& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += Real(2) * x.data()[i] * g.data()[i];
      });
    }
    return out;
  }

  Ref softplus(Ref a) {
    Tensor<Real> t = value(a);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = stable_softplus(t.data()[i]);
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, out] {
        const Tensor<Real>& g = grad_of(out);
        const Tensor<Real>& x = value(a);
        Tensor<Real>& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          Real sig = Real(1) / (Real(1) + std::exp(-x.data()[i]));
          ga.data()[i] += sig * g.data()[i];
        }
      });
    }
    return out;
  }

  Ref sum(Ref a) {
    Tensor<Real> t(1, 1);
    const Tensor<Real>& x = value(a);
    Real acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
    t(0, 0) = acc;
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, out] {
        Real g = grad_of(out)(0, 0);
        Tensor<Real>& ga = grad_slot(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
      });
    }
    return out;
  }

  Ref gather_rows(Ref table, std::vector<int> ids) {
    const Tensor<Real>& t = value(table);
    if (t.rank() != 2) fail("dimension", "gather_rows expects rank-2 table");
    Tensor<Real> out_t(static_cast<int>(ids.size()), t.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] < 0 || ids[r] >= t.rows()) fail("not_found", "gather_rows index out of range");
      std::memcpy(out_t.row(static_cast<int>(r)), t.row(ids[r]),
                  sizeof(Real) * static_cast<std::size_t>(t.cols()));
    }
    Ref out = push(std::move(out_t), needs(table));
    if (recording(out)) {
      auto ids_ptr = std::make_shared<std::vector<int>>(std::move(ids));
      set_back(out, [this, table, ids_ptr, out] {
        const Tensor<Real>& g = grad_of(out);
        Tensor<Real>& gt = grad_slot(table);
        for (std::size_t r = 0; r < ids_ptr->size(); ++r)
          detail::axpy(Real(1), g.row(static_cast<int>(r)), gt.row((*ids_ptr)[r]), g.cols());
      });
    }
    return out;
  }

  Ref slice_rows(Ref a, int r0, int r1) {
    const Tensor<Real>& x = value(a);
    if (r0 < 0 || r1 > x.rows() || r0 >= r1) fail("dimension", "slice_rows range");
    Tensor<Real> t(r1 - r0, x.cols());
    std::memcpy(t.data(), x.row(r0), sizeof(Real) * t.size());
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, r0, out] {
        const Tensor<Real>& g = grad_of(out);
        Tensor<Real>& ga = grad_slot(a);
        for (int r = 0; r < g.rows(); ++r)
          detail::axpy(Real(1), g.row(r), ga.row(r0 + r), g.cols());
      });
    }
    return out;
  }

  Ref slice_cols(Ref a, int c0, int c1) {
    const Tensor<Real>& x = value(a);
    if (c0 < 0 || c1 > x.cols() || c0 >= c1) fail("dimension", "slice_cols range");
    Tensor<Real> t(x.rows(), c1 - c0);
    for (int r = 0; r < x.rows(); ++r)
      std::memcpy(t.row(r), x.row(r) + c0, sizeof(Real) * static_cast<std::size_t>(c1 - c0));
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, c0, out] {
        const Tensor<Real>& g = grad_of(out);
        Tensor<Real>& ga = grad_slot(a);
        for (int r = 0; r < g.rows(); ++r)
          detail::axpy(Real(1), g.row(r), ga.row(r) + c0, g.cols());
      });
    }
    return out;
  }

  Ref concat_cols(Ref a, Ref b) {
    const Tensor<Real>& x = value(a);
    const Tensor<Real>& y = value(b);
    if (x.rows() != y.rows()) fail("dimension", "concat_cols row mismatch");
    Tensor<Real> t(x.rows(), x.cols() + y.cols());
    for (int r = 0; r < x.rows(); ++r) {
      std::memcpy(t.row(r), x.row(r), sizeof(Real) * static_cast<std::size_t>(x.cols()));
      std::memcpy(t.row(r) + x.cols(), y.row(r), sizeof(Real) * static_cast<std::size_t>(y.cols()));
    }
    Ref out = push(std::move(t), needs(a) || needs(b));
    if (recording(out)) {
      int ac = x.cols();
      set_back(out, [this, a, b, ac, out] {
        const Tensor<Real>& g = grad_of(out);
        if (needs(a)) {
          Tensor<Real>& ga = grad_slot(a);
          for (int r = 0; r < g.rows(); ++r) detail::axpy(Real(1), g.row(r), ga.row(r), ac);
        }
        if (needs(b)) {
          Tensor<Real>& gb = grad_slot(b);
          for (int r = 0; r < g.rows(); ++r)
            detail::axpy(Real(1), g.row(r) + ac, gb.row(r), g.cols() - ac);
        }
      });
    }
    return out;
  }

  Ref vstack(Ref a, Ref b) {
    const Tensor<Real>& x = value(a);
    const Tensor<Real>& y = value(b);
    if (x.cols() != y.cols()) fail("dimension", "vstack col mismatch");
    Tensor<Real> t(x.rows() + y.rows(), x.cols());
    std::memcpy(t.data(), x.data(), sizeof(Real) * x.size());
    std::memcpy(t.row(x.rows()), y.data(), sizeof(Real) * y.size());
    Ref out = push(std::move(t), needs(a) || needs(b));
    if (recording(out)) {
      int ar = x.rows();
      set_back(out, [this, a, b, ar, out] {
        const Tensor<Real>& g = grad_of(out);
        if (needs(a)) {
          Tensor<Real>& ga = grad_slot(a);
          for (int r = 0; r < ar; ++r) detail::axpy(Real(1), g.row(r), ga.row(r), g.cols());
        }
        if (needs(b)) {
          Tensor<Real>& gb = grad_slot(b);
          for (int r = ar; r < g.rows(); ++r)
            detail::axpy(Real(1), g.row(r), gb.row(r - ar), g.cols());
        }
      });
    }
    return out;
  }

  // Row-wise masked softmax of an (m x m) score matrix; the mask grid must
  // match m and masked entries come out exactly zero.
  Ref masked_softmax_rows(Ref a, const AttentionMask& mask) {
    Tensor<Real> t = value(a);
    if (t.rank() != 2 || t.rows() != t.cols() || mask.size() != t.rows())
      fail("dimension", "masked_softmax_rows expects square scores matching the mask");
    for (int i = 0; i < t.rows(); ++i)
      masked_softmax_row_inplace(t.row(i), t.cols(), [&](int j) { return mask.allowed(i, j); });
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, out] {
        const Tensor<Real>& g = grad_of(out);
        const Tensor<Real>& p = value(out);
        Tensor<Real>& ga = grad_slot(a);
        for (int i = 0; i < g.rows(); ++i) {
          const Real* pi = p.row(i);
          const Real* gi = g.row(i);
          Real inner = detail::dot_n(gi, pi, g.cols());
          Real* gai = ga.row(i);
          for (int j = 0; j < g.cols(); ++j) gai[j] += pi[j] * (gi[j] - inner);
        }
      });
    }
    return out;
  }

  // Softmax over all entries of a column vector (k x 1).
  Ref softmax_vec(Ref a) {
    Tensor<Real> t = value(a);
    if (t.rank() != 2 || t.cols() != 1) fail("dimension", "softmax_vec expects (k x 1)");
    masked_softmax_row_inplace(t.data(), t.rows(), [](int) { return true; });
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, out] {
        const Tensor<Real>& g = grad_of(out);
        const Tensor<Real>& p = value(out);
        Tensor<Real>& ga = grad_slot(a);
        Real inner = detail::dot_n(g.data(), p.data(), g.rows());
        for (int i = 0; i < g.rows(); ++i)
          ga.data()[i] += p.data()[i] * (g.data()[i] - inner);
      });
    }
    return out;
  }

  // y = gain * (x - mean) / sqrt(var + eps) + bias, per row; gain/bias (1 x d).
  Ref layer_norm_rows(Ref x, Ref gain, Ref bias, Real eps) {
    const Tensor<Real>& xv = value(x);
    const Tensor<Real>& gv = value(gain);
    const Tensor<Real>& bv = value(bias);
    const int d = xv.cols();
    if (gv.rows() != 1 || gv.cols() != d || bv.rows() != 1 || bv.cols() != d)
      fail("dimension", "layer_norm_rows gain/bias shape");
    auto xhat = std::make_shared<Tensor<Real>>(xv.rows(), d);
    auto inv_sigma = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(xv.rows()));
    Tensor<Real> t(xv.rows(), d);
    for (int i = 0; i < xv.rows(); ++i) {
      const Real* xi = xv.row(i);
      Real mean = 0;
      for (int j = 0; j < d; ++j) mean += xi[j];
      mean /= static_cast<Real>(d);
      Real var = 0;
      for (int j = 0; j < d; ++j) {
        Real c = xi[j] - mean;
        var += c * c;
      }
      var /= static_cast<Real>(d);
      Real inv = Real(1) / std::sqrt(var + eps);
      (*inv_sigma)[static_cast<std::size_t>(i)] = inv;
      Real* xh = xhat->row(i);
      Real* ti = t.row(i);
      for (int j = 0; j < d; ++j) {
        xh[j] = (xi[j] - mean) * inv;
        ti[j] = gv.row(0)[j] * xh[j] + bv.row(0)[j];
      }
    }
    Ref out = push(std::move(t), needs(x) || needs(gain) || needs(bias));
    if (recording(out)) {
      set_back(out, [this, x, gain, bias, xhat, inv_sigma, out] {
        const Tensor<Real>& g = grad_of(out);
        const Tensor<Real>& gv2 = value(gain);
        const int d = g.cols();
        if (needs(gain)) {
          Tensor<Real>& gg = grad_slot(gain);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < d; ++j) gg.row(0)[j] += g.row(i)[j] * xhat->row(i)[j];
        }
        if (needs(bias)) {
          Tensor<Real>& gb = grad_slot(bias);
          for (int i = 0; i < g.rows(); ++i) detail::axpy(Real(1), g.row(i), gb.row(0), d);
        }
        if (needs(x)) {
          Tensor<Real>& gx = grad_slot(x);
          for (int i = 0; i < g.rows(); ++i) {
            const Real* gi = g.row(i);
            const Real* xh = xhat->row(i);
            Real inv = (*inv_sigma)[static_cast<std::size_t>(i)];
            Real mean_dxh = 0, mean_dxh_xh = 0;
            for (int j = 0; j < d; ++j) {
              Real dxh = gi[j] * gv2.row(0)[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[j];
            }
            mean_dxh /= static_cast<Real>(d);
            mean_dxh_xh /= static_cast<Real>(d);
            Real* gxi = gx.row(i);
            for (int j = 0; j < d; ++j) {
              Real dxh = gi[j] * gv2.row(0)[j];
              gxi[j] += inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
            }
          }
        }
      });
    }
    return out;
  }

  // Inverted dropout; identity when p == 0 or the graph is in inference mode.
  Ref dropout(Ref a, Real p, Rng* rng) {
    if (p <= Real(0) || !training()) return a;
    if (p >= Real(1)) fail("config", "dropout rate must be < 1");
    if (rng == nullptr) fail("config", "dropout requires an RNG during training");
    const Tensor<Real>& x = value(a);
    auto mask = std::make_shared<Tensor<Real>>(x);
    Real keep = Real(1) - p;
    Real inv_keep = Real(1) / keep;
    Tensor<Real> t = x;
    for (std::size_t i = 0; i < t.size(); ++i) {
      Real m = (rng->uniform() < static_cast<double>(keep)) ? inv_keep : Real(0);
      mask->data()[i] = m;
      t.data()[i] *= m;
    }
    Ref out = push(std::move(t), needs(a));
    if (recording(out)) {
      set_back(out, [this, a, mask, out] {
        const Tensor<Real>& g = grad_of(out);
        Tensor<Real>& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * mask->data()[i];
      });
    }
    return out;
  }

  // Forward identity; blocks gradient flow entirely.
  Ref stop_gradient(Ref a) { return push(value(a), false); }

  Ref dot(Ref a, Ref b) { return matmul(a, b, false, true); }

  // Runs reverse accumulation from a scalar node. Parameter gradients are
  // accumulated (not overwritten) into the attached GradBuffer.
  void backward(Ref loss) {
    if (!training()) fail("config", "backward on an inference graph");
    if (loss.is_param()) fail("config", "backward target must be a node");
    Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (ln.value.size() != 1) fail("dimension", "backward target must be scalar");
    if (ln.grad.empty()) ln.grad = Tensor<Real>(1, 1);
    ln.grad(0, 0) = Real(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back && !n.grad.empty()) n.back();
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;  // lazily allocated
    std::function<void()> back;
    bool needs = false;
  };

  bool needs(Ref r) const {
    if (r.is_param()) return training();
    return nodes_[static_cast<std::size_t>(r.id)].needs;
  }

  bool recording(Ref out) const {
    return training() && nodes_[static_cast<std::size_t>(out.id)].needs;
  }

  Ref push(Tensor<Real> t, bool needs_grad) {
    Node n;
    n.value = std::move(t);
    n.needs = needs_grad && training();
    nodes_.push_back(std::move(n));
    return Ref{static_cast<int>(nodes_.size()) - 1};
  }

  void set_back(Ref r, std::function<void()> fn) {
    nodes_[static_cast<std::size_t>(r.id)].back = std::move(fn);
  }

  const Tensor<Real>& grad_of(Ref r) const {
    return nodes_[static_cast<std::size_t>(r.id)].grad;
  }

  Tensor<Real>& grad_slot(Ref r) {
    if (r.is_param()) return grads_->grad(r.param_id());
    Node& n = nodes_[static_cast<std::size_t>(r.id)];
    if (n.grad.empty()) {
      n.grad = n.value;
      n.grad.zero();
    }
    return n.grad;
  }

  const ParameterStore<Real>& params_;
  GradBuffer<Real>* grads_;
  std::vector<Node> nodes_;
};

}  // namespace reseq
