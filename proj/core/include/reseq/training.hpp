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
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "reseq/evaluation.hpp"
#include "reseq/model.hpp"

namespace reseq {

// -sum_k log sigmoid(pos - neg_k), via the stable softplus identity
// -log sigmoid(x) = softplus(-x). Averaging over the batch is the caller's.
template <typename Real>
Real bpr_loss(Real positive, const std::vector<Real>& negatives) {
  Real total = 0;
  for (Real n : negatives) total += stable_softplus(n - positive);
  return total;
}

// sum_k [(z_pos - z_neg_k) - (y_pos - y_neg_k)]^2 over index-aligned negative
// sets: the k-th micro negative must replace the same element as the k-th
// macro negative.
template <typename Real>
Real margin_mse_loss(Real z_pos, const std::vector<Real>& z_neg, Real y_pos,
                     const std::vector<Real>& y_neg) {
  if (z_neg.size() != y_neg.size())
    fail("dimension", "margin_mse_loss: micro and macro negative sets are misaligned");
  Real total = 0;
  for (std::size_t k = 0; k < z_neg.size(); ++k) {
    Real margin_gap = (z_pos - z_neg[k]) - (y_pos - y_neg[k]);
    total += margin_gap * margin_gap;
  }
  return total;
}

template <typename Real>
Real total_loss(Real l_ma, Real l_mi, Real l_sd, Real lambda, Real mu) {
  return l_ma + lambda * l_mi + mu * l_sd;
}

// One training example: the positive pair at horizon T plus one sampled
// negative user per side, all histories truncated to T.
struct TrainInstance {
  int u = -1, v = -1;
  std::int64_t T = 0;
  BehaviorSequence seq_u, seq_v;
  int u_neg = -1, v_neg = -1;
  BehaviorSequence seq_u_neg, seq_v_neg;
};

inline TrainInstance build_train_instance(const InteractionStore& store,
                                          const InteractionStore::IndexedInteraction& rec,
                                          int max_len, Rng& rng) {
  TrainInstance inst;
  inst.u = rec.u;
  inst.v = rec.v;
  inst.T = rec.ts;
  inst.seq_u = store.truncated_sequence(Side::U, rec.u, rec.ts, max_len);
  inst.seq_v = store.truncated_sequence(Side::V, rec.v, rec.ts, max_len);
  auto nu = sample_negative_user(rng, store, Side::U, rec.u, rec.ts, max_len);
  auto nv = sample_negative_user(rng, store, Side::V, rec.v, rec.ts, max_len);
  inst.u_neg = nu.user;
  inst.seq_u_neg = std::move(nu.sequence);
  inst.v_neg = nv.user;
  inst.seq_v_neg = std::move(nv.sequence);
  audit_sequence_before(inst.seq_u, inst.T);
  audit_sequence_before(inst.seq_v, inst.T);
  audit_sequence_before(inst.seq_u_neg, inst.T);
  audit_sequence_before(inst.seq_v_neg, inst.T);
  return inst;
}

template <typename Real>
struct UserRefs {
  typename Graph<Real>::Ref p, f, p_mic, f_mic, e_p, e_f;
  int s = 0;
};

template <typename Real>
UserRefs<Real> encode_user_graph(Graph<Real>& g, const Model<Real>& model, Side side, int user,
                                 const BehaviorSequence& seq, Real dropout, Rng* rng) {
  UserRefs<Real> refs;
  refs.s = seq.length();
  auto active = model.encode_sequence_graph(g, seq, Perspective::Active, dropout, rng);
  auto passive = model.encode_sequence_graph(g, seq, Perspective::Passive, dropout, rng);
  refs.p = active.macro;
  refs.f = passive.macro;
  if (refs.s > 0) {
    refs.p_mic = active.micro;
    refs.f_mic = passive.micro;
  }
  refs.e_p = model.emb.resolve(g, side, Perspective::Active, user);
  refs.e_f = model.emb.resolve(g, side, Perspective::Passive, user);
  return refs;
}

// TiSensiMatch on the tape: G restricted to valid rows, gamma from the active
// user's original embedding, delta from the passive user's original embedding
// plus the reversed relative-time bias.
template <typename Real>
typename Graph<Real>::Ref tsm_graph(Graph<Real>& g, const Model<Real>& model,
                                    const UserRefs<Real>& active, const UserRefs<Real>& passive,
                                    Side active_side) {
  using Ref = typename Graph<Real>::Ref;
  Ref big_g = g.matmul(active.p_mic, passive.f_mic, false, true);
  Ref gamma, delta;
  if (model.cfg.micro_aggregation == MicroAggregation::Mean) {
    Tensor<Real> ug(passive.s, 1);
    ug.fill(Real(1) / static_cast<Real>(passive.s));
    gamma = g.constant(std::move(ug));
    Tensor<Real> ud(active.s, 1);
    ud.fill(Real(1) / static_cast<Real>(active.s));
    delta = g.constant(std::move(ud));
  } else {
    gamma = g.softmax_vec(g.matmul(passive.f_mic, active.e_p, false, true));
    Ref bias = g.gather_rows(Graph<Real>::param(model.alpha_id(active_side)),
                             relative_time_indices(active.s));
    delta = g.softmax_vec(g.add(g.matmul(active.p_mic, passive.e_f, false, true), bias));
  }
  return g.matmul(g.matmul(delta, big_g, true, false), gamma);
}

template <typename Real>
struct InstanceLossRefs {
  typename Graph<Real>::Ref l_ma, l_mi, l_sd;
  bool micro_defined = false;
  double l_ma_value = 0, l_mi_value = 0, l_sd_value = 0;
};

// Builds the per-instance pieces of the training objective on the tape:
// BPR over the four one-element-replaced macro negatives, the same over the
// micro negatives, and the margin-MSE distillation term pairing the k-th
// micro margin with the k-th macro margin. Micro terms are skipped (macro
// only) when any involved history is empty. With detach_teacher the micro
// scores enter the distillation term as constants.
template <typename Real>
InstanceLossRefs<Real> build_instance_loss(Graph<Real>& g, const Model<Real>& model,
                                           const TrainInstance& inst, Real dropout = Real(0),
                                           Rng* rng = nullptr) {
  using Ref = typename Graph<Real>::Ref;
  auto u = encode_user_graph(g, model, Side::U, inst.u, inst.seq_u, dropout, rng);
  auto v = encode_user_graph(g, model, Side::V, inst.v, inst.seq_v, dropout, rng);
  auto un = encode_user_graph(g, model, Side::U, inst.u_neg, inst.seq_u_neg, dropout, rng);
  auto vn = encode_user_graph(g, model, Side::V, inst.v_neg, inst.seq_v_neg, dropout, rng);

  Ref y_fwd = g.dot(u.p, v.f);
  Ref y_bwd = g.dot(v.p, u.f);
  Ref y_pos = g.add(y_fwd, y_bwd);
  // one element replaced at a time: p_u, f_u, p_v, f_v
  std::array<Ref, 4> y_neg = {
      g.add(g.dot(un.p, v.f), y_bwd),
      g.add(y_fwd, g.dot(v.p, un.f)),
      g.add(y_fwd, g.dot(vn.p, u.f)),
      g.add(g.dot(u.p, vn.f), y_bwd),
  };

  InstanceLossRefs<Real> out;
  Ref l_ma;
  bool first = true;
  for (const auto& yn : y_neg) {
    Ref term = g.softplus(g.sub(yn, y_pos));
    l_ma = first ? term : g.add(l_ma, term);
    first = false;
  }
  out.l_ma = l_ma;
  out.l_ma_value = static_cast<double>(g.value(l_ma).scalar());

  out.micro_defined = u.s > 0 && v.s > 0 && un.s > 0 && vn.s > 0;
  if (!out.micro_defined) return out;

  Ref z_fwd = tsm_graph(g, model, u, v, Side::U);
  Ref z_bwd = tsm_graph(g, model, v, u, Side::V);
  Ref z_pos = g.add(z_fwd, z_bwd);
  std::array<Ref, 4> z_neg = {
      g.add(tsm_graph(g, model, un, v, Side::U), z_bwd),
      g.add(z_fwd, tsm_graph(g, model, v, un, Side::V)),
      g.add(z_fwd, tsm_graph(g, model, vn, u, Side::V)),
      g.add(tsm_graph(g, model, u, vn, Side::U), z_bwd),
  };

  Ref l_mi;
  first = true;
  for (const auto& zn : z_neg) {
    Ref term = g.softplus(g.sub(zn, z_pos));
    l_mi = first ? term : g.add(l_mi, term);
    first = false;
  }
  out.l_mi = l_mi;
  out.l_mi_value = static_cast<double>(g.value(l_mi).scalar());

  if (model.cfg.self_distill) {
    Ref zt_pos = model.cfg.detach_teacher ? g.stop_gradient(z_pos) : z_pos;
    Ref l_sd;
    first = true;
    for (std::size_t k = 0; k < 4; ++k) {
      Ref zt_neg = model.cfg.detach_teacher ? g.stop_gradient(z_neg[k]) : z_neg[k];
      Ref gap = g.sub(g.sub(zt_pos, zt_neg), g.sub(y_pos, y_neg[k]));
      Ref term = g.square(gap);
      l_sd = first ? term : g.add(l_sd, term);
      first = false;
    }
    out.l_sd = l_sd;
    out.l_sd_value = static_cast<double>(g.value(l_sd).scalar());
  }
  return out;
}

struct EpochStats {
  int epoch = 0;
  double loss = 0;      // mean total loss per instance
  double loss_ma = 0;   // mean BPR over macro scores
  double loss_mi = 0;   // mean BPR over micro scores (defined instances only in the numerator)
  double loss_sd = 0;   // mean distillation term
  double valid_metric = 0;
  std::int64_t instances = 0;
  std::int64_t micro_defined = 0;
  double seconds = 0;
};

struct TrainHooks {
  // Overrides the per-epoch validation metric (tests drive early stopping
  // with this).
  std::function<double(int epoch)> validation_metric;
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::vector<EpochStats> trace;
};

// Mini-batch training with per-side negative sampling, early stopping on the
// mean dual-perspective validation NDCG@k (macro-only scoring), and in-place
// restoration of the best parameters on exit.
//
// Determinism: negative sampling and dropout draw from streams keyed by
// (seed, epoch, instance), and each worker accumulates gradients into its own
// buffer with buffers merged in worker order, so a fixed config (including
// threads) reproduces the loss trace exactly.
template <typename Real>
TrainResult train(Model<Real>& model, const InteractionStore& store, const DatasetSplit& split,
                  const TrainHooks& hooks = {}) {
  const TrainingConfig& cfg = model.cfg;
  cfg.validate();
  auto train_records = store.index_records(split.train);
  if (train_records.empty()) fail("infeasible", "train split is empty");

  const int threads = resolve_threads(cfg.threads);
  std::vector<GradBuffer<Real>> buffers;
  buffers.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) buffers.emplace_back(model.params);

  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.beta1 = cfg.adam_beta1;
  adam.beta2 = cfg.adam_beta2;
  adam.epsilon = cfg.adam_eps;
  adam.weight_decay = cfg.weight_decay;

  const Real lambda = static_cast<Real>(cfg.lambda_micro);
  const Real mu = static_cast<Real>(cfg.mu_distill);

  TrainResult result;
  std::vector<Tensor<Real>> best_values = model.snapshot_values();
  int stale_epochs = 0;

  std::vector<std::size_t> order(train_records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    auto epoch_start = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(cfg.seed, 0xe99c4, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;

    for (std::size_t batch_begin = 0; batch_begin < order.size();
         batch_begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t batch_end =
          std::min(order.size(), batch_begin + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t batch_n = batch_end - batch_begin;
      const Real inv_b = Real(1) / static_cast<Real>(batch_n);

      std::vector<std::array<double, 4>> inst_losses(batch_n);  // ma, mi, sd, micro?
      parallel_for(batch_n, threads, [&](std::size_t begin, std::size_t end, int worker) {
        for (std::size_t b = begin; b < end; ++b) {
          const std::size_t gi = order[batch_begin + b];
          Rng inst_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), gi, 0x137));
          TrainInstance inst =
              build_train_instance(store, train_records[gi], cfg.max_seq_len, inst_rng);
          Graph<Real> g(model.params, &buffers[static_cast<std::size_t>(worker)]);
          auto losses = build_instance_loss(g, model, inst, static_cast<Real>(cfg.dropout),
                                            &inst_rng);
          std::vector<std::pair<Real, typename Graph<Real>::Ref>> terms;
          terms.emplace_back(inv_b, losses.l_ma);
          if (losses.micro_defined) {
            terms.emplace_back(lambda * inv_b, losses.l_mi);
            if (model.cfg.self_distill) terms.emplace_back(mu * inv_b, losses.l_sd);
          }
          auto total = g.add_scaled(terms);
          g.backward(total);
          inst_losses[b] = {losses.l_ma_value, losses.l_mi_value, losses.l_sd_value,
                            losses.micro_defined ? 1.0 : 0.0};
        }
      });

      model.params.zero_grad();
      for (auto& buf : buffers) {
        buf.add_into_store(model.params);
        buf.clear();
      }
      adam_step_all(model.params, adam);

      for (std::size_t b = 0; b < batch_n; ++b) {
        const auto& l = inst_losses[b];
        double inst_total = l[0] + cfg.lambda_micro * l[1] +
                            (cfg.self_distill ? cfg.mu_distill * l[2] : 0.0);
        if (!std::isfinite(inst_total))
          fail("nonfinite", "training diverged (non-finite loss) at epoch " +
                                std::to_string(epoch) + ", batch offset " +
                                std::to_string(batch_begin));
        stats.loss += inst_total;
        stats.loss_ma += l[0];
        stats.loss_mi += l[1];
        stats.loss_sd += l[2];
        stats.micro_defined += l[3] > 0 ? 1 : 0;
        stats.instances += 1;
      }
    }

    stats.loss /= static_cast<double>(stats.instances);
    stats.loss_ma /= static_cast<double>(stats.instances);
    stats.loss_mi /= static_cast<double>(stats.instances);
    stats.loss_sd /= static_cast<double>(stats.instances);

    double metric;
    if (hooks.validation_metric) {
      metric = hooks.validation_metric(epoch);
    } else if (split.valid.empty()) {
      metric = 0.0;  // no signal; patience will stop the run
    } else {
      EvalConfig ec;
      ec.k = cfg.eval_k;
      ec.negatives = cfg.eval_negatives;
      ec.seed = derive_seed(cfg.seed, 0x7a11d);  // fixed across epochs for comparability
      ec.max_instances = cfg.valid_eval_instances;
      ec.threads = threads;
      metric = evaluate_split(model, store, split.valid, ec).mean_ndcg();
    }
    stats.valid_metric = metric;
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.trace.push_back(stats);
    result.epochs_run = epoch + 1;
    if (hooks.on_epoch) hooks.on_epoch(stats);

    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      best_values = model.snapshot_values();
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= cfg.patience) break;
    }
  }

  model.restore_values(best_values);
  return result;
}

}  // namespace reseq
