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
#include <cassert>
#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "reseq/common.hpp"

namespace reseq {

// Dense row-major real array of rank <= 3. Rank 2 carries all the model math;
// rank 1 holds vectors, rank 3 is available for completeness.
template <typename Real>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(int len) : rank_(1), dims_{len, 1, 1}, data_(check_size(len), Real(0)) {}
  Tensor(int rows, int cols)
      : rank_(2), dims_{rows, cols, 1}, data_(check_size(rows, cols), Real(0)) {}
  Tensor(int d0, int d1, int d2)
      : rank_(3), dims_{d0, d1, d2}, data_(check_size(d0, d1, d2), Real(0)) {}

  static Tensor vector(std::vector<Real> values) {
    Tensor t(static_cast<int>(values.size()));
    t.data_ = std::move(values);
    return t;
  }

  static Tensor matrix(int rows, int cols, std::vector<Real> values) {
    Tensor t(rows, cols);
    if (values.size() != t.data_.size()) fail("dimension", "matrix init size mismatch");
    t.data_ = std::move(values);
    return t;
  }

  int rank() const { return rank_; }
  int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  int rows() const { return dims_[0]; }
  int cols() const { return rank_ >= 2 ? dims_[1] : 1; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool same_shape(const Tensor& o) const { return rank_ == o.rank_ && dims_ == o.dims_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '(';
    for (int i = 0; i < rank_; ++i) os << (i ? "x" : "") << dims_[static_cast<std::size_t>(i)];
    os << ')';
    return os.str();
  }

  Real& operator()(int i) {
    assert(rank_ == 1 && i >= 0 && i < dims_[0]);
    return data_[static_cast<std::size_t>(i)];
  }
  Real operator()(int i) const {
    assert(rank_ == 1 && i >= 0 && i < dims_[0]);
    return data_[static_cast<std::size_t>(i)];
  }
  Real& operator()(int i, int j) {
    assert(rank_ == 2 && i >= 0 && i < dims_[0] && j >= 0 && j < dims_[1]);
    return data_[static_cast<std::size_t>(i) * dims_[1] + j];
  }
  Real operator()(int i, int j) const {
    assert(rank_ == 2 && i >= 0 && i < dims_[0] && j >= 0 && j < dims_[1]);
    return data_[static_cast<std::size_t>(i) * dims_[1] + j];
  }
  Real& operator()(int i, int j, int k) {
    assert(rank_ == 3);
    return data_[(static_cast<std::size_t>(i) * dims_[1] + j) * dims_[2] + k];
  }
  Real operator()(int i, int j, int k) const {
    assert(rank_ == 3);
    return data_[(static_cast<std::size_t>(i) * dims_[1] + j) * dims_[2] + k];
  }

  Real* row(int i) {
    assert(rank_ == 2);
    return data_.data() + static_cast<std::size_t>(i) * dims_[1];
  }
  const Real* row(int i) const {
    assert(rank_ == 2);
    return data_.data() + static_cast<std::size_t>(i) * dims_[1];
  }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { std::memset(data_.data(), 0, data_.size() * sizeof(Real)); }

  Real scalar() const {
    if (size() != 1) fail("dimension", "scalar() on tensor of shape " + shape_str());
    return data_[0];
  }

  bool all_finite() const {
    for (Real v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> t;
    t.rank_ = rank_;
    t.dims_ = dims_;
    t.data_.resize(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) t.data_[i] = static_cast<Other>(data_[i]);
    return t;
  }

  template <typename R>
  friend class Tensor;

 private:
  static std::size_t check_size(long long a, long long b = 1, long long c = 1) {
    if (a < 0 || b < 0 || c < 0) fail("dimension", "negative tensor dimension");
    return static_cast<std::size_t>(a * b * c);
  }

  int rank_ = 0;
  std::array<int, 3> dims_{0, 0, 0};
  std::vector<Real> data_;
};

namespace detail {

template <typename Real>
inline void axpy(Real a, const Real* x, Real* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename Real>
inline Real dot_n(const Real* a, const Real* b, int n) {
  Real acc = 0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace detail

// out (+)= op(a) * op(b) where op transposes when the flag is set. Both inputs
// must be rank 2; `out` must be preshaped by the caller.
template <typename Real>
void matmul_into(Tensor<Real>& out, const Tensor<Real>& a, const Tensor<Real>& b, bool ta,
                 bool tb, bool accumulate) {
  const int m = ta ? a.cols() : a.rows();
  const int k = ta ? a.rows() : a.cols();
  const int kb = tb ? b.cols() : b.rows();
  const int n = tb ? b.rows() : b.cols();
  if (a.rank() != 2 || b.rank() != 2 || k != kb)
    fail("dimension", "matmul shape mismatch " + a.shape_str() + " x " + b.shape_str());
  if (out.rank() != 2 || out.rows() != m || out.cols() != n)
    fail("dimension", "matmul output shape mismatch");
  if (!accumulate) out.zero();

  if (!ta && !tb) {
    for (int i = 0; i < m; ++i) {
      const Real* arow = a.row(i);
      Real* crow = out.row(i);
      for (int p = 0; p < k; ++p) detail::axpy(arow[p], b.row(p), crow, n);
    }
  } else if (!ta && tb) {
    for (int i = 0; i < m; ++i) {
      const Real* arow = a.row(i);
      Real* crow = out.row(i);
      for (int j = 0; j < n; ++j) crow[j] += detail::dot_n(arow, b.row(j), k);
    }
  } else if (ta && !tb) {
    for (int p = 0; p < k; ++p) {
      const Real* arow = a.row(p);
      const Real* brow = b.row(p);
      for (int i = 0; i < m; ++i) detail::axpy(arow[i], brow, out.row(i), n);
    }
  } else {
    for (int i = 0; i < m; ++i) {
      Real* crow = out.row(i);
      for (int j = 0; j < n; ++j) {
        Real acc = 0;
        for (int p = 0; p < k; ++p) acc += a(p, i) * b(j, p);
        crow[j] += acc;
      }
    }
  }
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b, bool ta = false,
                    bool tb = false) {
  Tensor<Real> out(ta ? a.cols() : a.rows(), tb ? b.rows() : b.cols());
  matmul_into(out, a, b, ta, tb, false);
  return out;
}

template <typename Real>
void add_into(Tensor<Real>& out, const Tensor<Real>& a, Real scale = Real(1)) {
  if (!out.same_shape(a)) fail("dimension", "add shape mismatch");
  detail::axpy(scale, a.data(), out.data(), static_cast<int>(a.size()));
}

}  // namespace reseq
