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

// Command-line entry point. Every command resolves a flat key=value config
// (defaults, then --config file, then positional key=value overrides; last
// writer wins), runs under a fresh run directory named by timestamp and
// seed, and records the resolved config next to its artifacts.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "reseq/bench.hpp"
#include "reseq/checkpoint.hpp"
#include "reseq/config.hpp"
#include "reseq/data.hpp"
#include "reseq/evaluation.hpp"
#include "reseq/training.hpp"

namespace fs = std::filesystem;
using namespace reseq;

namespace {

struct CliSettings {
  TrainingConfig train;
  // synthetic generator
  int synth_users_u = 500;
  int synth_users_v = 500;
  int synth_clusters = 4;
  int synth_events_per_user = 20;
  std::int64_t synth_horizon = 1'000'000;
  double synth_within_prob = 0.8;
  // split
  double split_train_frac = 0.8;
  double split_valid_frac = 0.1;
  // paths
  std::string out_root = "runs";
  std::string input;
  std::string data_dir;
  std::string checkpoint;
  std::string eval_split = "test";
  int eval_max_instances = 0;
  // bench
  std::string bench_n_values = "8,16,32,64,128";
  int bench_d = 64;
  int bench_batch = 256;
  int bench_repetitions = 30;
  int bench_warmup = 3;
};

const std::vector<std::string>& cli_only_keys() {
  static const std::vector<std::string> keys = {
      "synth_users_u", "synth_users_v", "synth_clusters", "synth_events_per_user",
      "synth_horizon", "synth_within_prob", "split_train_frac", "split_valid_frac", "out_root",
      "input", "data_dir", "checkpoint", "eval_split", "eval_max_instances", "bench_n_values",
      "bench_d", "bench_batch", "bench_repetitions", "bench_warmup"};
  return keys;
}

template <typename T>
T parse_num_value(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof()) fail("config", "key '" + key + "': cannot parse value '" + v + "'");
  return out;
}

void apply_settings(CliSettings& s, const KeyValueMap& kv) {
  KeyValueMap train_kv;
  for (const auto& [key, value] : kv) {
    if (key == "synth_users_u") s.synth_users_u = parse_num_value<int>(key, value);
    else if (key == "synth_users_v") s.synth_users_v = parse_num_value<int>(key, value);
    else if (key == "synth_clusters") s.synth_clusters = parse_num_value<int>(key, value);
    else if (key == "synth_events_per_user") s.synth_events_per_user = parse_num_value<int>(key, value);
    else if (key == "synth_horizon") s.synth_horizon = parse_num_value<std::int64_t>(key, value);
    else if (key == "synth_within_prob") s.synth_within_prob = parse_num_value<double>(key, value);
    else if (key == "split_train_frac") s.split_train_frac = parse_num_value<double>(key, value);
    else if (key == "split_valid_frac") s.split_valid_frac = parse_num_value<double>(key, value);
    else if (key == "out_root") s.out_root = value;
    else if (key == "input") s.input = value;
    else if (key == "data_dir") s.data_dir = value;
    else if (key == "checkpoint") s.checkpoint = value;
    else if (key == "eval_split") s.eval_split = value;
    else if (key == "eval_max_instances") s.eval_max_instances = parse_num_value<int>(key, value);
    else if (key == "bench_n_values") s.bench_n_values = value;
    else if (key == "bench_d") s.bench_d = parse_num_value<int>(key, value);
    else if (key == "bench_batch") s.bench_batch = parse_num_value<int>(key, value);
    else if (key == "bench_repetitions") s.bench_repetitions = parse_num_value<int>(key, value);
    else if (key == "bench_warmup") s.bench_warmup = parse_num_value<int>(key, value);
    else train_kv[key] = value;  // TrainingConfig validates and reports unknowns
  }
  try {
    s.train.apply_kv(train_kv);
  } catch (const Error& e) {
    std::string msg = e.what();
    if (msg.find("unknown config key") != std::string::npos) {
      std::string keys;
      for (const auto& k : cli_only_keys()) keys += ", " + k;
      fail("config", msg + keys);
    }
    throw;
  }
}

KeyValueMap settings_to_kv(const CliSettings& s) {
  KeyValueMap kv = s.train.to_kv();
  kv["synth_users_u"] = std::to_string(s.synth_users_u);
  kv["synth_users_v"] = std::to_string(s.synth_users_v);
  kv["synth_clusters"] = std::to_string(s.synth_clusters);
  kv["synth_events_per_user"] = std::to_string(s.synth_events_per_user);
  kv["synth_horizon"] = std::to_string(s.synth_horizon);
  kv["synth_within_prob"] = std::to_string(s.synth_within_prob);
  kv["split_train_frac"] = std::to_string(s.split_train_frac);
  kv["split_valid_frac"] = std::to_string(s.split_valid_frac);
  kv["out_root"] = s.out_root;
  kv["input"] = s.input;
  kv["data_dir"] = s.data_dir;
  kv["checkpoint"] = s.checkpoint;
  kv["eval_split"] = s.eval_split;
  kv["eval_max_instances"] = std::to_string(s.eval_max_instances);
  kv["bench_n_values"] = s.bench_n_values;
  kv["bench_d"] = std::to_string(s.bench_d);
  kv["bench_batch"] = std::to_string(s.bench_batch);
  kv["bench_repetitions"] = std::to_string(s.bench_repetitions);
  kv["bench_warmup"] = std::to_string(s.bench_warmup);
  return kv;
}

CliSettings resolve_settings(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  CliSettings s;
  if (!config_path.empty()) apply_settings(s, parse_kv_file(config_path));
  KeyValueMap kv;
  for (const auto& o : overrides) {
    auto [k, v] = parse_override(o);
    kv[k] = v;
  }
  apply_settings(s, kv);
  return s;
}

fs::path make_run_dir(const CliSettings& s, const std::string& command) {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%S", &tm);
  fs::path base = fs::path(s.out_root) /
                  (std::string(stamp) + "_s" + std::to_string(s.train.seed) + "_" + command);
  fs::path dir = base;
  for (int i = 2; fs::exists(dir); ++i) dir = base.string() + "-" + std::to_string(i);
  fs::create_directories(dir);
  write_kv_file((dir / "resolved_config.txt").string(), settings_to_kv(s));
  std::cout << "run_dir=" << dir.string() << "\n";
  return dir;
}

std::vector<int> parse_n_values(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(parse_num_value<int>("bench_n_values", tok));
  }
  if (out.empty()) fail("config", "bench_n_values is empty");
  return out;
}

struct PreparedData {
  InteractionStore store;
  DatasetSplit split;
};

PreparedData load_prepared(const CliSettings& s) {
  if (s.data_dir.empty()) fail("config", "data_dir is required (a 'prepare' run directory)");
  fs::path dir(s.data_dir);
  for (const char* f : {"filtered.tsv", "train.tsv", "valid.tsv", "test.tsv"})
    if (!fs::exists(dir / f)) fail("not_found", "missing " + std::string(f) + " under " + s.data_dir);
  auto filtered = parse_interactions_file((dir / "filtered.tsv").string());
  DatasetSplit split;
  split.train = parse_interactions_file((dir / "train.tsv").string()).records;
  split.valid = parse_interactions_file((dir / "valid.tsv").string()).records;
  split.test = parse_interactions_file((dir / "test.tsv").string()).records;
  return PreparedData{InteractionStore(filtered.records), std::move(split)};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail("not_found", "cannot write: " + path.string());
  out << text;
}

int cmd_synth(const CliSettings& s) {
  SyntheticConfig sc;
  sc.seed = s.train.seed;
  sc.users_u = s.synth_users_u;
  sc.users_v = s.synth_users_v;
  sc.clusters = s.synth_clusters;
  sc.events_per_user = s.synth_events_per_user;
  sc.horizon = s.synth_horizon;
  sc.within_cluster_prob = s.synth_within_prob;
  auto records = generate_synthetic(sc);
  auto dir = make_run_dir(s, "synth");
  write_interactions_file((dir / "synthetic.tsv").string(), records);
  std::cout << "records=" << records.size() << "\n"
            << "output=" << (dir / "synthetic.tsv").string() << "\n";
  return 0;
}

int cmd_prepare(const CliSettings& s) {
  if (s.input.empty()) fail("config", "input is required (path to an interaction log)");
  if (!fs::exists(s.input)) fail("not_found", "input file not found: " + s.input);
  auto parsed = parse_interactions_file(s.input);
  auto filtered = five_core_filter(parsed.records);
  auto split = temporal_split(filtered.records, s.split_train_frac, s.split_valid_frac);

  auto dir = make_run_dir(s, "prepare");
  write_interactions_file((dir / "filtered.tsv").string(), filtered.records);
  write_interactions_file((dir / "train.tsv").string(), split.train);
  write_interactions_file((dir / "valid.tsv").string(), split.valid);
  write_interactions_file((dir / "test.tsv").string(), split.test);

  KeyValueMap manifest;
  manifest["input"] = s.input;
  manifest["parsed_records"] = std::to_string(parsed.records.size());
  manifest["duplicates_dropped"] = std::to_string(parsed.duplicates_dropped);
  manifest["filtered_records"] = std::to_string(filtered.records.size());
  manifest["five_core_rounds"] = std::to_string(filtered.rounds);
  manifest["removed_users_u"] = std::to_string(filtered.removed_u.size());
  manifest["removed_users_v"] = std::to_string(filtered.removed_v.size());
  manifest["train_records"] = std::to_string(split.train.size());
  manifest["valid_records"] = std::to_string(split.valid.size());
  manifest["test_records"] = std::to_string(split.test.size());
  manifest["valid_boundary"] = std::to_string(split.valid_boundary);
  manifest["test_boundary"] = std::to_string(split.test_boundary);
  for (std::size_t i = 0; i < split.warnings.size(); ++i)
    manifest["warning_" + std::to_string(i)] = split.warnings[i];
  write_kv_file((dir / "split_manifest.txt").string(), manifest);
  for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "filtered=" << filtered.records.size() << " train=" << split.train.size()
            << " valid=" << split.valid.size() << " test=" << split.test.size() << "\n";
  return 0;
}

template <typename Real>
int run_train(const CliSettings& s, const PreparedData& data, const fs::path& dir) {
  auto model = Model<Real>::build(s.train, data.store.user_count(Side::U),
                                  data.store.user_count(Side::V));
  std::ostringstream log;
  log << "epoch,loss,loss_ma,loss_mi,loss_sd,valid_metric,seconds\n";
  TrainHooks hooks;
  hooks.on_epoch = [&log](const EpochStats& st) {
    log << st.epoch << ',' << st.loss << ',' << st.loss_ma << ',' << st.loss_mi << ','
        << st.loss_sd << ',' << st.valid_metric << ',' << st.seconds << "\n";
    std::cout << "epoch " << st.epoch << ": loss=" << st.loss
              << " valid_ndcg@5=" << st.valid_metric << " (" << st.seconds << "s)\n";
  };
  auto result = train(model, data.store, data.split, hooks);
  save_checkpoint((dir / "checkpoint.reseq").string(), model, result.best_epoch,
                  result.best_metric);
  write_text(dir / "loss_log.csv", log.str());
  std::cout << "best_epoch=" << result.best_epoch << " best_valid_ndcg@5=" << result.best_metric
            << "\ncheckpoint=" << (dir / "checkpoint.reseq").string() << "\n";
  return 0;
}

int cmd_train(const CliSettings& s) {
  auto data = load_prepared(s);
  auto dir = make_run_dir(s, "train");
  if (s.train.scalar == "f64") return run_train<double>(s, data, dir);
  return run_train<float>(s, data, dir);
}

template <typename Real>
EvalReport eval_checkpoint(const CliSettings& s, const PreparedData& data) {
  auto model = load_checkpoint<Real>(s.checkpoint);
  EvalConfig ec;
  ec.k = model.cfg.eval_k;
  ec.negatives = model.cfg.eval_negatives;
  ec.seed = derive_seed(s.train.seed, 0xe7a1);
  ec.max_instances = s.eval_max_instances;
  ec.threads = s.train.threads;
  const auto& records = s.eval_split == "valid" ? data.split.valid
                        : s.eval_split == "train" ? data.split.train
                                                  : data.split.test;
  return evaluate_split(model, data.store, records, ec);
}

int cmd_eval(const CliSettings& s) {
  if (s.checkpoint.empty()) fail("config", "checkpoint is required");
  if (!fs::exists(s.checkpoint)) fail("not_found", "checkpoint not found: " + s.checkpoint);
  auto data = load_prepared(s);
  auto info = peek_checkpoint(s.checkpoint);
  auto report = info.dtype == "f64" ? eval_checkpoint<double>(s, data)
                                    : eval_checkpoint<float>(s, data);
  auto dir = make_run_dir(s, "eval");
  write_text(dir / "metrics.txt", report.text_table());
  KeyValueMap kv;
  for (const auto& [k, v] : report.kv()) kv[k] = v;
  kv["checkpoint"] = s.checkpoint;
  kv["split"] = s.eval_split;
  write_kv_file((dir / "metrics.kv").string(), kv);
  std::cout << report.text_table();
  return 0;
}

int cmd_bench(const CliSettings& s) {
  LatencyConfig lc;
  lc.n_values = parse_n_values(s.bench_n_values);
  lc.d = s.bench_d;
  lc.batch = s.bench_batch;
  lc.repetitions = s.bench_repetitions;
  lc.warmup = s.bench_warmup;
  lc.seed = s.train.seed;
  auto macro_rows = measure_latency(ScorerKind::Macro, lc);
  auto micro_rows = measure_latency(ScorerKind::Micro, lc);
  auto macro_fit = fit_growth_exponent(macro_rows);
  auto micro_fit = fit_growth_exponent(micro_rows);

  std::vector<LatencyRow> all = macro_rows;
  all.insert(all.end(), micro_rows.begin(), micro_rows.end());
  auto dir = make_run_dir(s, "bench");
  write_text(dir / "latency.csv", latency_csv(all));

  KeyValueMap kv;
  kv["macro.beta"] = std::to_string(macro_fit.exponent);
  kv["macro.residual_rms"] = std::to_string(macro_fit.residual_rms);
  kv["micro.beta"] = std::to_string(micro_fit.exponent);
  kv["micro.residual_rms"] = std::to_string(micro_fit.residual_rms);
  const auto& last_macro = macro_rows.back();
  const auto& last_micro = micro_rows.back();
  kv["speedup_at_n" + std::to_string(last_macro.n)] =
      std::to_string(last_micro.median_us / last_macro.median_us);
  write_kv_file((dir / "growth.kv").string(), kv);
  std::cout << latency_csv(all) << "macro beta=" << macro_fit.exponent
            << " micro beta=" << micro_fit.exponent
            << " speedup(n=" << last_macro.n
            << ")=" << last_micro.median_us / last_macro.median_us << "x\n";
  return 0;
}

struct AblationVariant {
  std::string name;
  std::function<void(TrainingConfig&)> tweak;
};

template <typename Real>
int run_ablate(const CliSettings& s, const PreparedData& data, const fs::path& dir) {
  const std::vector<AblationVariant> variants = {
      {"full", [](TrainingConfig&) {}},
      {"no_shared_embedding", [](TrainingConfig& c) { c.share_embeddings = false; }},
      {"bidirectional_mask_only", [](TrainingConfig& c) { c.mask_mode = MaskMode::BidirectionalAll; }},
      {"mean_aggregation", [](TrainingConfig& c) { c.micro_aggregation = MicroAggregation::Mean; }},
      {"no_self_distillation", [](TrainingConfig& c) { c.self_distill = false; }},
  };
  std::ostringstream csv, table;
  csv << "variant,hr_u,hr_v,ndcg_u,ndcg_v,mean_ndcg\n";
  table << "variant                     mean NDCG@" << s.train.eval_k << "\n";
  for (const auto& variant : variants) {
    CliSettings vs = s;
    variant.tweak(vs.train);
    auto model = Model<Real>::build(vs.train, data.store.user_count(Side::U),
                                    data.store.user_count(Side::V));
    auto result = train(model, data.store, data.split);
    fs::path vdir = dir / "variants" / variant.name;
    fs::create_directories(vdir);
    save_checkpoint((vdir / "checkpoint.reseq").string(), model, result.best_epoch,
                    result.best_metric);
    EvalConfig ec;
    ec.k = vs.train.eval_k;
    ec.negatives = vs.train.eval_negatives;
    ec.seed = derive_seed(vs.train.seed, 0xe7a1);
    ec.max_instances = s.eval_max_instances;
    ec.threads = vs.train.threads;
    auto report = evaluate_split(model, data.store, data.split.test, ec);
    KeyValueMap kv;
    for (const auto& [k, v] : report.kv()) kv[k] = v;
    write_kv_file((vdir / "metrics.kv").string(), kv);
    csv << variant.name << ',' << report.perspective_u.hr << ',' << report.perspective_v.hr << ','
        << report.perspective_u.ndcg << ',' << report.perspective_v.ndcg << ','
        << report.mean_ndcg() << "\n";
    std::ostringstream row;
    row.setf(std::ios::fixed);
    row.precision(4);
    row << variant.name;
    for (std::size_t pad = variant.name.size(); pad < 28; ++pad) row << ' ';
    row << report.mean_ndcg() << "\n";
    table << row.str();
    std::cout << "variant " << variant.name << ": mean ndcg@" << vs.train.eval_k << " = "
              << report.mean_ndcg() << "\n";
  }
  write_text(dir / "ablation.csv", csv.str());
  write_text(dir / "ablation.txt", table.str());
  std::cout << table.str();
  return 0;
}

int cmd_ablate(const CliSettings& s) {
  auto data = load_prepared(s);
  auto dir = make_run_dir(s, "ablate");
  if (s.train.scalar == "f64") return run_ablate<double>(s, data, dir);
  return run_ablate<float>(s, data, dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reseq: two-sided sequence matching — train, evaluate, benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string command;
  for (const auto& [name, help] :
       std::vector<std::pair<std::string, std::string>>{
           {"synth", "generate a seeded synthetic interaction log"},
           {"prepare", "parse, 5-core filter and temporally split an interaction log"},
           {"train", "train a matcher on a prepared data directory"},
           {"eval", "rank-evaluate a checkpoint (macro scoring, dual perspectives)"},
           {"bench", "measure macro vs micro matching latency and growth exponents"},
           {"ablate", "train and compare the full model against the four ablation variants"}}) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "flat key=value config file");
    sub->add_option("overrides", overrides, "key=value overrides (last writer wins)");
    sub->callback([&command, name = name] { command = name; });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    auto settings = resolve_settings(config_path, overrides);
    if (command == "synth") return cmd_synth(settings);
    if (command == "prepare") return cmd_prepare(settings);
    if (command == "train") return cmd_train(settings);
    if (command == "eval") return cmd_eval(settings);
    if (command == "bench") return cmd_bench(settings);
    if (command == "ablate") return cmd_ablate(settings);
    std::cerr << "error: code=config unknown command\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: code=" << e.code() << " " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: code=internal " << e.what() << "\n";
    return 1;
  }
}
