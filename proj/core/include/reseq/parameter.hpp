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
#include <map>
#include <string>
#include <vector>

#include "reseq/common.hpp"
#include "reseq/tensor.hpp"

namespace reseq {

// One trainable tensor: value, gradient accumulator and Adam state.
template <typename Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  Tensor<Real> moment1;
  Tensor<Real> moment2;
  std::int64_t step = 0;
};

template <typename Real>
class ParameterStore {
 public:
  int add(const std::string& name, Tensor<Real> init) {
    if (index_.count(name)) fail("config", "duplicate parameter name: " + name);
    Parameter<Real> p;
    p.name = name;
    p.grad = init;
    p.grad.zero();
    p.moment1 = p.grad;
    p.moment2 = p.grad;
    p.value = std::move(init);
    params_.push_back(std::move(p));
    int id = static_cast<int>(params_.size()) - 1;
    index_[name] = id;
    return id;
  }

  int count() const { return static_cast<int>(params_.size()); }
  Parameter<Real>& at(int id) { return params_[static_cast<std::size_t>(id)]; }
  const Parameter<Real>& at(int id) const { return params_[static_cast<std::size_t>(id)]; }
  const Tensor<Real>& value(int id) const { return at(id).value; }
  Tensor<Real>& mutable_value(int id) { return at(id).value; }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.zero();
  }

  std::size_t total_entries() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter<Real>> params_;
  std::map<std::string, int> index_;
};

// Per-worker gradient sink. Workers accumulate independently and the buffers
// are merged into Parameter::grad in worker order, keeping batch gradients
// deterministic for a fixed thread count.
template <typename Real>
class GradBuffer {
 public:
  GradBuffer() = default;

  explicit GradBuffer(const ParameterStore<Real>& store) { reset(store); }

  void reset(const ParameterStore<Real>& store) {
    grads_.clear();
    grads_.reserve(static_cast<std::size_t>(store.count()));
    for (int i = 0; i < store.count(); ++i) {
      Tensor<Real> g = store.value(i);
      g.zero();
      grads_.push_back(std::move(g));
    }
  }

  void clear() {
    for (auto& g : grads_) g.zero();
  }

  Tensor<Real>& grad(int id) { return grads_[static_cast<std::size_t>(id)]; }
  const Tensor<Real>& grad(int id) const { return grads_[static_cast<std::size_t>(id)]; }
  int count() const { return static_cast<int>(grads_.size()); }

  void add_into_store(ParameterStore<Real>& store) const {
    for (int i = 0; i < count(); ++i) add_into(store.at(i).grad, grads_[static_cast<std::size_t>(i)]);
  }

 private:
  std::vector<Tensor<Real>> grads_;
};

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// Bias-corrected Adam. Weight decay is classic L2: it is added to the
// gradient before the moment updates, not decoupled from them.
template <typename Real>
void adam_step(Parameter<Real>& p, const AdamConfig& cfg) {
  const std::size_t n = p.value.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(p.grad.data()[i])))
      fail("nonfinite", "non-finite gradient in parameter '" + p.name + "'");
  }
  p.step += 1;
  const Real b1 = static_cast<Real>(cfg.beta1);
  const Real b2 = static_cast<Real>(cfg.beta2);
  const Real corr1 = static_cast<Real>(1.0 - std::pow(cfg.beta1, static_cast<double>(p.step)));
  const Real corr2 = static_cast<Real>(1.0 - std::pow(cfg.beta2, static_cast<double>(p.step)));
  const Real lr = static_cast<Real>(cfg.learning_rate);
  const Real eps = static_cast<Real>(cfg.epsilon);
  const Real wd = static_cast<Real>(cfg.weight_decay);
  Real* v = p.value.data();
  Real* g = p.grad.data();
  Real* m1 = p.moment1.data();
  Real* m2 = p.moment2.data();
  for (std::size_t i = 0; i < n; ++i) {
    Real gi = g[i] + wd * v[i];
    m1[i] = b1 * m1[i] + (Real(1) - b1) * gi;
    m2[i] = b2 * m2[i] + (Real(1) - b2) * gi * gi;
    Real mhat = m1[i] / corr1;
    Real vhat = m2[i] / corr2;
    v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename Real>
void adam_step_all(ParameterStore<Real>& store, const AdamConfig& cfg) {
  for (auto& p : store) adam_step(p, cfg);
}

struct FiniteDiffTensorReport {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int entries_checked = 0;
  bool pass = true;
};

struct FiniteDiffReport {
  std::vector<FiniteDiffTensorReport> tensors;
  double max_rel_err = 0.0;
  bool pass = true;

  std::string summary() const {
    std::string s;
    for (const auto& t : tensors) {
      s += t.name + ": max_rel_err=" + std::to_string(t.max_rel_err) +
           (t.pass ? " pass" : " FAIL") + "\n";
    }
    return s;
  }
};

// Central-difference check of analytic gradients. `loss_and_grad` must run a
// deterministic forward pass, and accumulate analytic gradients into the
// store's Parameter::grad when `with_grad` is set. Vanishing entries are
// compared absolutely: any entry whose absolute discrepancy is below `atol`
// passes, since a difference quotient on a loss of magnitude f cannot
// resolve gradients much below eps*f/h relatively.
// `max_entries_per_tensor` == 0 checks every entry.
template <typename Real>
FiniteDiffReport finite_diff_check(ParameterStore<Real>& store,
                                   const std::function<Real(bool with_grad)>& loss_and_grad,
                                   Real h, double tol, int max_entries_per_tensor = 0,
                                   std::uint64_t sample_seed = 0, double atol = 1e-7) {
  store.zero_grad();
  Real base = loss_and_grad(true);
  if (!std::isfinite(static_cast<double>(base))) fail("nonfinite", "non-finite loss in finite_diff_check");

  FiniteDiffReport report;
  Rng rng(derive_seed(sample_seed, 0xfd));

  for (auto& p : store) {
    FiniteDiffTensorReport tr;
    tr.name = p.name;
    const std::size_t n = p.value.size();
    std::vector<std::size_t> picks;
    if (max_entries_per_tensor > 0 && static_cast<std::size_t>(max_entries_per_tensor) < n) {
      for (int k = 0; k < max_entries_per_tensor; ++k)
        picks.push_back(static_cast<std::size_t>(rng.below(n)));
    } else {
      picks.resize(n);
      for (std::size_t i = 0; i < n; ++i) picks[i] = i;
    }
    for (std::size_t idx : picks) {
      Real* slot = p.value.data() + idx;
      const Real saved = *slot;
      auto quotient = [&](Real step) {
        *slot = saved + step;
        Real up = loss_and_grad(false);
        *slot = saved - step;
        Real down = loss_and_grad(false);
        *slot = saved;
        if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(down)))
          fail("nonfinite", "non-finite loss while perturbing '" + p.name + "'");
        return (static_cast<double>(up) - static_cast<double>(down)) /
               (2.0 * static_cast<double>(step));
      };
      const double analytic = static_cast<double>(p.grad.data()[idx]);
      auto errors = [&](double numeric) {
        double abs_err = std::abs(analytic - numeric);
        double rel_err =
            abs_err <= atol ? 0.0 : abs_err / (std::abs(analytic) + std::abs(numeric));
        return std::make_pair(abs_err, rel_err);
      };
      auto [abs_err, rel_err] = errors(quotient(h));
      // A failing entry is retried at smaller steps: O(h^2) truncation noise
      // collapses under refinement while a genuinely wrong gradient keeps an
      // O(1) discrepancy at every step size.
      Real step = h;
      for (int refine = 0; refine < 2 && rel_err >= tol; ++refine) {
        step = step / Real(8);
        auto [a2, r2] = errors(quotient(step));
        if (r2 < rel_err) {
          abs_err = a2;
          rel_err = r2;
        }
      }
      tr.entries_checked += 1;
      tr.max_abs_err = std::max(tr.max_abs_err, abs_err);
      tr.max_rel_err = std::max(tr.max_rel_err, rel_err);
    }
    tr.pass = tr.max_rel_err < tol;
    report.max_rel_err = std::max(report.max_rel_err, tr.max_rel_err);
    report.pass = report.pass && tr.pass;
    report.tensors.push_back(std::move(tr));
  }
  return report;
}

}  // namespace reseq
