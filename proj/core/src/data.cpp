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

#include "reseq/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace reseq {

namespace {

bool parse_timestamp(const std::string& field, std::int64_t* out) {
  if (field.empty()) return false;
  std::int64_t v = 0;
  for (char c : field) {
    if (c < '0' || c > '9') return false;
    if (v > (INT64_MAX - (c - '0')) / 10) return false;
    v = v * 10 + (c - '0');
  }
  *out = v;
  return true;
}

std::string dedup_key(const InteractionRecord& r) {
  return r.u_id + '\t' + r.v_id + '\t' + std::to_string(r.timestamp);
}

}  // namespace

ParseResult parse_interactions(std::istream& in) {
  ParseResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos)
      fail("parse", "line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    InteractionRecord rec;
    rec.u_id = line.substr(0, t1);
    rec.v_id = line.substr(t1 + 1, t2 - t1 - 1);
    if (rec.u_id.empty() || rec.v_id.empty())
      fail("parse", "line " + std::to_string(line_no) + ": empty user id");
    if (!parse_timestamp(line.substr(t2 + 1), &rec.timestamp))
      fail("parse", "line " + std::to_string(line_no) + ": timestamp is not a non-negative integer");
    if (!seen.insert(dedup_key(rec)).second) {
      ++result.duplicates_dropped;
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

ParseResult parse_interactions_text(const std::string& text) {
  std::istringstream is(text);
  return parse_interactions(is);
}

ParseResult parse_interactions_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("not_found", "cannot open interaction log: " + path);
  return parse_interactions(in);
}

void write_interactions(std::ostream& out, const std::vector<InteractionRecord>& records) {
  for (const auto& r : records) out << r.u_id << '\t' << r.v_id << '\t' << r.timestamp << '\n';
}

void write_interactions_file(const std::string& path, const std::vector<InteractionRecord>& records) {
  std::ofstream out(path);
  if (!out) fail("not_found", "cannot write: " + path);
  write_interactions(out, records);
}

FiveCoreReport five_core_filter(const std::vector<InteractionRecord>& records, int min_count) {
  FiveCoreReport report;
  report.records = records;
  std::unordered_set<std::string> removed_u, removed_v;
  while (true) {
    ++report.rounds;
    std::unordered_map<std::string, int> deg_u, deg_v;
    for (const auto& r : report.records) {
      ++deg_u[r.u_id];
      ++deg_v[r.v_id];
    }
    std::unordered_set<std::string> drop_u, drop_v;
    for (const auto& [id, d] : deg_u)
      if (d < min_count) drop_u.insert(id);
    for (const auto& [id, d] : deg_v)
      if (d < min_count) drop_v.insert(id);
    if (drop_u.empty() && drop_v.empty()) break;
    std::vector<InteractionRecord> kept;
    kept.reserve(report.records.size());
    for (auto& r : report.records) {
      if (drop_u.count(r.u_id) || drop_v.count(r.v_id)) continue;
      kept.push_back(std::move(r));
    }
    report.records = std::move(kept);
    removed_u.insert(drop_u.begin(), drop_u.end());
    removed_v.insert(drop_v.begin(), drop_v.end());
  }
  report.removed_u.assign(removed_u.begin(), removed_u.end());
  report.removed_v.assign(removed_v.begin(), removed_v.end());
  std::sort(report.removed_u.begin(), report.removed_u.end());
  std::sort(report.removed_v.begin(), report.removed_v.end());
  return report;
}

DatasetSplit temporal_split(const std::vector<InteractionRecord>& records, double train_frac,
                            double valid_frac) {
  if (records.empty()) fail("infeasible", "temporal_split on empty record list");
  if (train_frac <= 0 || valid_frac < 0 || train_frac + valid_frac >= 1.0)
    fail("config", "temporal_split fractions must satisfy 0 < train, 0 <= valid, train+valid < 1");
  std::vector<std::int64_t> ts;
  ts.reserve(records.size());
  for (const auto& r : records) ts.push_back(r.timestamp);
  std::sort(ts.begin(), ts.end());
  const auto n = ts.size();
  auto idx1 = static_cast<std::size_t>(train_frac * static_cast<double>(n));
  auto idx2 = static_cast<std::size_t>((train_frac + valid_frac) * static_cast<double>(n));
  idx1 = std::min(idx1, n - 1);
  idx2 = std::min(idx2, n - 1);

  DatasetSplit split;
  split.valid_boundary = ts[idx1];
  split.test_boundary = ts[idx2];
  for (const auto& r : records) {
    if (r.timestamp < split.valid_boundary)
      split.train.push_back(r);
    else if (r.timestamp < split.test_boundary)
      split.valid.push_back(r);
    else
      split.test.push_back(r);
  }
  if (split.train.empty()) split.warnings.push_back("train split is empty");
  if (split.valid.empty()) split.warnings.push_back("valid split is empty");
  if (split.test.empty()) split.warnings.push_back("test split is empty");
  return split;
}

InteractionStore::InteractionStore(const std::vector<InteractionRecord>& records) {
  auto intern = [this](Side s, const std::string& id) {
    auto& map = index_[idx(s)];
    auto it = map.find(id);
    if (it != map.end()) return it->second;
    int dense = static_cast<int>(ids_[idx(s)].size());
    map.emplace(id, dense);
    ids_[idx(s)].push_back(id);
    events_[idx(s)].emplace_back();
    return dense;
  };
  for (const auto& r : records) {
    int u = intern(Side::U, r.u_id);
    int v = intern(Side::V, r.v_id);
    events_[idx(Side::U)][static_cast<std::size_t>(u)].push_back({r.timestamp, v});
    events_[idx(Side::V)][static_cast<std::size_t>(v)].push_back({r.timestamp, u});
  }
  for (auto& side_events : events_)
    for (auto& evs : side_events)
      std::stable_sort(evs.begin(), evs.end(),
                       [](const Event& a, const Event& b) { return a.ts < b.ts; });
}

int InteractionStore::index_of(Side s, const std::string& id) const {
  auto it = index_[idx(s)].find(id);
  return it == index_[idx(s)].end() ? -1 : it->second;
}

BehaviorSequence InteractionStore::truncated_sequence(Side s, int user, std::int64_t T,
                                                      int max_len) const {
  if (user < 0 || user >= user_count(s))
    fail("not_found", std::string("unknown user index on side ") + side_name(s));
  if (max_len < 0) fail("config", "max_len must be non-negative");
  const auto& evs = events(s, user);
  auto end = std::lower_bound(evs.begin(), evs.end(), T,
                              [](const Event& e, std::int64_t t) { return e.ts < t; });
  auto count = static_cast<std::size_t>(end - evs.begin());
  auto keep = std::min<std::size_t>(count, static_cast<std::size_t>(max_len));
  BehaviorSequence seq;
  seq.owner = user;
  seq.side = s;
  seq.events.assign(end - static_cast<std::ptrdiff_t>(keep), end);
  return seq;
}

BehaviorSequence InteractionStore::truncated_sequence_by_id(Side s, const std::string& id,
                                                            std::int64_t T, int max_len) const {
  int user = index_of(s, id);
  if (user < 0) fail("not_found", "unknown user id: " + id);
  return truncated_sequence(s, user, T, max_len);
}

std::vector<InteractionStore::IndexedInteraction> InteractionStore::index_records(
    const std::vector<InteractionRecord>& records) const {
  std::vector<IndexedInteraction> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    int u = index_of(Side::U, r.u_id);
    int v = index_of(Side::V, r.v_id);
    if (u < 0 || v < 0) fail("not_found", "record references user absent from the store");
    out.push_back({u, v, r.timestamp});
  }
  return out;
}

NegativeSample sample_negative_user(Rng& rng, const InteractionStore& store, Side side,
                                    int exclude, std::int64_t T, int max_len) {
  int count = store.user_count(side);
  if (count < 2)
    fail("infeasible", std::string("need at least 2 users on side ") + side_name(side) +
                           " to sample a negative");
  auto draw = static_cast<int>(rng.below(static_cast<std::uint64_t>(count - 1)));
  if (draw >= exclude) ++draw;
  NegativeSample ns;
  ns.user = draw;
  ns.sequence = store.truncated_sequence(side, draw, T, max_len);
  return ns;
}

std::vector<InteractionRecord> generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.users_u <= 0 || cfg.users_v <= 0 || cfg.events_per_user <= 0 || cfg.horizon <= 0)
    fail("infeasible", "synthetic generator requires positive counts and horizon");
  if (cfg.clusters <= 0 || cfg.clusters > std::min(cfg.users_u, cfg.users_v))
    fail("infeasible", "clusters must lie in [1, min(users_u, users_v)]");
  if (cfg.within_cluster_prob < 0.0 || cfg.within_cluster_prob > 1.0)
    fail("infeasible", "within_cluster_prob must lie in [0, 1]");

  std::vector<std::vector<int>> v_in_cluster(static_cast<std::size_t>(cfg.clusters));
  std::vector<std::vector<int>> v_out_cluster(static_cast<std::size_t>(cfg.clusters));
  for (int v = 0; v < cfg.users_v; ++v) {
    int c = synthetic_cluster_of(v, cfg.clusters);
    for (int k = 0; k < cfg.clusters; ++k)
      (k == c ? v_in_cluster : v_out_cluster)[static_cast<std::size_t>(k)].push_back(v);
  }

  Rng rng(derive_seed(cfg.seed, 0x5eed));
  std::vector<InteractionRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.users_u) * cfg.events_per_user);
  for (int u = 0; u < cfg.users_u; ++u) {
    int c = synthetic_cluster_of(u, cfg.clusters);
    const auto& in = v_in_cluster[static_cast<std::size_t>(c)];
    const auto& out = v_out_cluster[static_cast<std::size_t>(c)];
    for (int e = 0; e < cfg.events_per_user; ++e) {
      bool within = out.empty() || rng.uniform() < cfg.within_cluster_prob;
      const auto& pool = within ? in : out;
      int v = pool[static_cast<std::size_t>(rng.below(pool.size()))];
      std::int64_t ts = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(cfg.horizon)));
      records.push_back({"u" + std::to_string(u + 1), "v" + std::to_string(v + 1), ts});
    }
  }
  return records;
}

void audit_sequence_before(const BehaviorSequence& seq, std::int64_t T) {
  for (const auto& ev : seq.events)
    if (ev.ts >= T)
      fail("leakage", "sequence event at t=" + std::to_string(ev.ts) +
                          " is not strictly before T=" + std::to_string(T));
}

}  // namespace reseq
