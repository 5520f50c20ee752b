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

#include <cstdint>
#include <limits>
#include <vector>

#include "reseq/common.hpp"
#include "reseq/tensor.hpp"

namespace reseq {

// Boolean (n+1)x(n+1) attention grid over a CLS slot (row/col 0) plus n event
// slots, of which the first `valid_len` are real and the rest are padding.
// Padding rows attend only themselves so their softmax stays well-defined;
// no other row ever attends a padding column.
class AttentionMask {
 public:
  AttentionMask(int n, int valid_len)
      : n_(n), valid_len_(valid_len), allow_(static_cast<std::size_t>(n + 1) * (n + 1), 0) {
    if (n < 0 || valid_len < 0 || valid_len > n)
      fail("dimension", "AttentionMask: need 0 <= valid_len <= n");
  }

  // Arbitrary grid for reference constructions (e.g. CLS-at-end causal
  // layouts in tests). All rows are treated as real.
  template <typename Pred>
  static AttentionMask custom(int rows, Pred allowed) {
    AttentionMask m(rows - 1, rows - 1);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < rows; ++j) m.set(i, j, allowed(i, j));
    return m;
  }

  int n() const { return n_; }
  int valid_len() const { return valid_len_; }
  int size() const { return n_ + 1; }

  bool allowed(int i, int j) const {
    return allow_[static_cast<std::size_t>(i) * (n_ + 1) + j] != 0;
  }
  void set(int i, int j, bool v) {
    allow_[static_cast<std::size_t>(i) * (n_ + 1) + j] = v ? 1 : 0;
  }

  // Every row must keep non-empty support, and padding columns may only be
  // attended by their own row.
  bool well_formed() const {
    for (int i = 0; i <= n_; ++i) {
      bool any = false;
      for (int j = 0; j <= n_; ++j) {
        if (!allowed(i, j)) continue;
        any = true;
        if (j >= 1 && j > valid_len_ && i != j) return false;
      }
      if (!any) return false;
    }
    return true;
  }

 private:
  int n_;
  int valid_len_;
  std::vector<std::uint8_t> allow_;
};

// Numerically stable softmax over the valid entries of `logits`; invalid
// entries come out exactly zero. Errors when no entry is valid.
template <typename Real>
std::vector<Real> masked_row_softmax(const std::vector<Real>& logits,
                                     const std::vector<bool>& valid) {
  if (logits.size() != valid.size()) fail("dimension", "masked_row_softmax size mismatch");
  Real max_v = -std::numeric_limits<Real>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (valid[i]) {
      any = true;
      if (logits[i] > max_v) max_v = logits[i];
    }
  }
  if (!any) fail("empty_support", "empty attention support");
  std::vector<Real> out(logits.size(), Real(0));
  Real denom = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (valid[i]) {
      out[i] = std::exp(logits[i] - max_v);
      denom += out[i];
    }
  }
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (valid[i]) out[i] /= denom;
  return out;
}

// In-place row softmax over `row[0..len)` restricted to allowed(i) entries.
template <typename Real, typename AllowFn>
void masked_softmax_row_inplace(Real* row, int len, AllowFn allowed) {
  Real max_v = -std::numeric_limits<Real>::infinity();
  bool any = false;
  for (int j = 0; j < len; ++j) {
    if (allowed(j)) {
      any = true;
      if (row[j] > max_v) max_v = row[j];
    }
  }
  if (!any) fail("empty_support", "empty attention support");
  Real denom = 0;
  for (int j = 0; j < len; ++j) {
    if (allowed(j)) {
      row[j] = std::exp(row[j] - max_v);
      denom += row[j];
    } else {
      row[j] = Real(0);
    }
  }
  Real inv = Real(1) / denom;
  for (int j = 0; j < len; ++j) row[j] *= inv;
}

template <typename Real>
Real stable_softplus(Real x) {
  // log(1 + e^x) without overflow on either tail.
  if (x > Real(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace reseq
