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

#include "reseq/encoder.hpp"

namespace reseq {

AttentionMask build_unidirectional_mask(int n, int valid_len) {
  AttentionMask mask(n, valid_len);
  mask.set(0, 0, true);
  for (int j = 1; j <= valid_len; ++j) mask.set(0, j, true);
  for (int i = 1; i <= valid_len; ++i)
    for (int j = 1; j <= i; ++j) mask.set(i, j, true);
  for (int i = valid_len + 1; i <= n; ++i) mask.set(i, i, true);
  return mask;
}

AttentionMask build_bidirectional_mask(int n, int valid_len) {
  AttentionMask mask(n, valid_len);
  for (int i = 0; i <= valid_len; ++i)
    for (int j = 0; j <= valid_len; ++j) mask.set(i, j, true);
  for (int i = valid_len + 1; i <= n; ++i) mask.set(i, i, true);
  return mask;
}

}  // namespace reseq
