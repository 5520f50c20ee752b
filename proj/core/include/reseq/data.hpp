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
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "reseq/common.hpp"

namespace reseq {

// One timestamped positive match between a U-side and a V-side user.
struct InteractionRecord {
  std::string u_id;
  std::string v_id;
  std::int64_t timestamp = 0;
};

struct ParseResult {
  std::vector<InteractionRecord> records;
  std::size_t duplicates_dropped = 0;
};

// Line format: u_id TAB v_id TAB timestamp. '#'-prefixed and blank lines are
// ignored. Exact duplicate triples are dropped (first occurrence kept);
// malformed lines raise Error("parse") carrying the 1-based line number.
ParseResult parse_interactions(std::istream& in);
ParseResult parse_interactions_text(const std::string& text);
ParseResult parse_interactions_file(const std::string& path);

void write_interactions(std::ostream& out, const std::vector<InteractionRecord>& records);
void write_interactions_file(const std::string& path, const std::vector<InteractionRecord>& records);

struct FiveCoreReport {
  std::vector<InteractionRecord> records;
  std::vector<std::string> removed_u;
  std::vector<std::string> removed_v;
  int rounds = 0;
};

// Iteratively removes users (either side) with fewer than `min_count`
// remaining interactions until a fixed point. Within a round all deficient
// users are removed simultaneously, so the result does not depend on
// enumeration order.
FiveCoreReport five_core_filter(const std::vector<InteractionRecord>& records, int min_count = 5);

struct DatasetSplit {
  std::vector<InteractionRecord> train;
  std::vector<InteractionRecord> valid;
  std::vector<InteractionRecord> test;
  std::int64_t valid_boundary = 0;  // first timestamp belonging to valid
  std::int64_t test_boundary = 0;   // first timestamp belonging to test
  std::vector<std::string> warnings;

  std::size_t total() const { return train.size() + valid.size() + test.size(); }
};

// Splits by timestamp percentile: records strictly below the first boundary
// train, in [b1, b2) valid, >= b2 test. Boundary ties land in the later
// split. Empty splits produce warnings, not errors.
DatasetSplit temporal_split(const std::vector<InteractionRecord>& records,
                            double train_frac = 0.8, double valid_frac = 0.1);

struct Event {
  std::int64_t ts;
  int counterpart;  // dense index on the opposite side
};

// A user's chronologically ordered counterpart list, truncated to some time T.
struct BehaviorSequence {
  int owner = -1;
  Side side = Side::U;
  std::vector<Event> events;

  int length() const { return static_cast<int>(events.size()); }
  bool empty() const { return events.empty(); }
};

// Immutable per-side vocabularies plus per-user event lists sorted by
// timestamp. Safe for concurrent readers once built.
class InteractionStore {
 public:
  explicit InteractionStore(const std::vector<InteractionRecord>& records);

  int user_count(Side s) const { return static_cast<int>(ids_[idx(s)].size()); }
  int index_of(Side s, const std::string& id) const;
  const std::string& id_of(Side s, int user) const { return ids_[idx(s)][static_cast<std::size_t>(user)]; }
  const std::vector<Event>& events(Side s, int user) const {
    return events_[idx(s)][static_cast<std::size_t>(user)];
  }

  // Events strictly before T, most recent `max_len` kept, ascending order.
  BehaviorSequence truncated_sequence(Side s, int user, std::int64_t T, int max_len) const;
  BehaviorSequence truncated_sequence_by_id(Side s, const std::string& id, std::int64_t T,
                                            int max_len) const;

  struct IndexedInteraction {
    int u;
    int v;
    std::int64_t ts;
  };
  std::vector<IndexedInteraction> index_records(const std::vector<InteractionRecord>& records) const;

 private:
  static std::size_t idx(Side s) { return s == Side::U ? 0 : 1; }

  std::vector<std::string> ids_[2];
  std::unordered_map<std::string, int> index_[2];
  std::vector<std::vector<Event>> events_[2];
};

struct NegativeSample {
  int user = -1;
  BehaviorSequence sequence;
};

// Uniform draw over `side`'s users excluding `exclude`, with the returned
// history truncated to T. Empty histories are permitted. Errors when the side
// has fewer than two users.
NegativeSample sample_negative_user(Rng& rng, const InteractionStore& store, Side side,
                                    int exclude, std::int64_t T, int max_len);

struct SyntheticConfig {
  std::uint64_t seed = 7;
  int users_u = 200;
  int users_v = 200;
  int clusters = 4;
  int events_per_user = 20;
  std::int64_t horizon = 1'000'000;
  double within_cluster_prob = 0.8;
};

// Seeded two-sided interaction log with planted cluster structure: every user
// gets a cluster, and each event picks a same-cluster partner with
// probability `within_cluster_prob`, otherwise a uniformly random partner
// from the other clusters. Timestamps are uniform over [0, horizon).
std::vector<InteractionRecord> generate_synthetic(const SyntheticConfig& cfg);

inline int synthetic_cluster_of(int user_index, int clusters) { return user_index % clusters; }

// Throws Error("leakage") when any event is not strictly before T.
void audit_sequence_before(const BehaviorSequence& seq, std::int64_t T);

}  // namespace reseq
