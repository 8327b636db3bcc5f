#include "gnndsr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "gnndsr/format.hpp"
#include "gnndsr/optim.hpp"
#include "gnndsr/rng.hpp"

namespace gnndsr {

double TrainConfig::resolved_dropout() const {
  if (dropout_rate >= 0.0) return dropout_rate;
  return mode == Mode::rating ? 0.5 : 0.4;
}

void TrainConfig::validate() const {
  if (d < 1) throw ValidationError("d must be positive");
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  if (learning_rate < 0.0) throw ValidationError("learning_rate must be non-negative");
  if (max_seq_len < 1) throw ValidationError("max_seq_len must be positive");
  if (neighbor_sample < 1) throw ValidationError("neighbor_sample must be positive");
  if (corr_k < 1) throw ValidationError("corr_k must be positive");
  if (resolved_dropout() >= 1.0) throw ValidationError("dropout_rate must be below 1");
  if (epochs < 1) throw ValidationError("epochs must be positive");
  if (patience < 1) throw ValidationError("patience must be positive");
  if (lstm_layers < 1) throw ValidationError("lstm_layers must be positive");
  if (n_negatives < 1) throw ValidationError("n_negatives must be positive");
  if (eval_k.empty()) throw ValidationError("eval_k must not be empty");
  for (int k : eval_k) {
    if (k < 1) throw ValidationError("eval_k entries must be positive");
  }
  ablation.validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.mode = mode;
  m.max_seq_len = max_seq_len;
  m.neighbor_sample = neighbor_sample;
  m.dropout_rate = resolved_dropout();
  m.ablation = ablation;
  return m;
}

Tensor mse_loss(GradTape& t, const std::vector<Tensor>& predictions,
                const std::vector<double>& targets) {
  if (predictions.empty()) throw DomainError("mse_loss: empty prediction list");
  if (predictions.size() != targets.size()) {
    throw DimensionError("mse_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
  }
  Tensor stacked = t.stack(predictions);
  Tensor diff = t.sub(stacked, Tensor::from_data({static_cast<int>(targets.size())}, targets));
  return t.scale(t.sum(t.hadamard(diff, diff)), 0.5 / static_cast<double>(targets.size()));
}

Tensor bce_loss(GradTape& t, const std::vector<Tensor>& probabilities,
                const std::vector<double>& labels) {
  if (probabilities.empty()) throw DomainError("bce_loss: empty probability list");
  if (probabilities.size() != labels.size()) {
    throw DimensionError("bce_loss: " + std::to_string(probabilities.size()) +
                         " probabilities vs " + std::to_string(labels.size()) + " labels");
  }
  const int n = static_cast<int>(labels.size());
  std::vector<double> pos(n), neg(n);
  for (int i = 0; i < n; ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) {
      throw DomainError("bce_loss: label " + format_g17(labels[i]) + " is not 0 or 1");
    }
    pos[i] = labels[i];
    neg[i] = 1.0 - labels[i];
  }
  Tensor p = t.clamp(t.stack(probabilities), 1e-7, 1.0 - 1e-7);
  Tensor on_target = t.hadamard(Tensor::from_data({n}, pos), t.log(p));
  Tensor off_target =
      t.hadamard(Tensor::from_data({n}, neg), t.log(t.add_const(t.scale(p, -1.0), 1.0)));
  return t.scale(t.sum(t.add(on_target, off_target)), -1.0 / static_cast<double>(n));
}

std::pair<double, double> rmse_mae(const std::vector<double>& predictions,
                                   const std::vector<double>& targets) {
  if (predictions.empty() || predictions.size() != targets.size()) {
    throw DomainError("rmse_mae: empty or mismatched inputs");
  }
  double sq = 0.0, abs = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    sq += e * e;
    abs += std::abs(e);
  }
  const double n = static_cast<double>(predictions.size());
  return {std::sqrt(sq / n), abs / n};
}

double mrr_contribution(int rank, int k) {
  if (rank < 1) throw DomainError("rank must be 1-based");
  return rank <= k ? 1.0 / static_cast<double>(rank) : 0.0;
}

double ndcg_contribution(int rank, int k) {
  if (rank < 1) throw DomainError("rank must be 1-based");
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

int rank_of_first(const std::vector<int>& candidates, const std::vector<double>& scores) {
  if (candidates.empty() || candidates.size() != scores.size()) {
    throw DomainError("rank_of_first: empty or mismatched inputs");
  }
  int rank = 1;
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    if (scores[c] > scores[0] || (scores[c] == scores[0] && candidates[c] < candidates[0])) {
      ++rank;
    }
  }
  return rank;
}

namespace {

std::vector<int> item_complement(const Dataset& ds, int user, bool train_only) {
  std::vector<char> seen(ds.n_items, 0);
  for (const auto& rec : ds.interactions) {
    if (rec.user == user && (!train_only || rec.split == Split::train)) seen[rec.item] = 1;
  }
  std::vector<int> out;
  for (int v = 0; v < ds.n_items; ++v) {
    if (!seen[v]) out.push_back(v);
  }
  return out;
}

}  // namespace

std::vector<int> never_interacted(const Dataset& ds, int user) {
  return item_complement(ds, user, false);
}

std::vector<int> never_interacted_in_train(const Dataset& ds, int user) {
  return item_complement(ds, user, true);
}

namespace {

std::vector<double> clamp_predictions(std::vector<double> preds, const Dataset& ds) {
  const double lo = ds.rating_min(), hi = ds.rating_max();
  for (double& p : preds) p = std::min(hi, std::max(lo, p));
  return preds;
}

// Uniform draw of `count` distinct values from `pool` (all of them when the
// pool is smaller).
std::vector<int> draw_without_replacement(const std::vector<int>& pool, int count,
                                          std::mt19937_64& rng) {
  if (static_cast<int>(pool.size()) <= count) return pool;
  std::vector<int> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::vector<int> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const auto pick = i + static_cast<int>(uniform_index(rng, idx.size() - i));
    std::swap(idx[i], idx[pick]);
    out.push_back(pool[idx[i]]);
  }
  return out;
}

}  // namespace

std::pair<double, double> evaluate_rating(const ModelParams& params, const Dataset& ds,
                                          const CorrelativeGraph& graph, Split split,
                                          const ModelConfig& cfg, std::mt19937_64& rng) {
  const auto records = split_records(ds, split);
  if (records.empty()) {
    throw DomainError(std::string("evaluate_rating: empty ") + split_name(split) + " split");
  }
  Model model(params, ds, graph, cfg);
  std::vector<Target> targets;
  std::vector<double> truths;
  for (const auto& rec : records) {
    targets.push_back({rec.user, rec.item, rec.timestamp});
    truths.push_back(static_cast<double>(rec.rating));
  }
  GradTape t(false);
  std::vector<double> preds;
  preds.reserve(targets.size());
  for (const Tensor& p : model.forward(t, targets, false, rng)) preds.push_back(p.value());
  return rmse_mae(clamp_predictions(std::move(preds), ds), truths);
}

RankingResult evaluate_ranking(const ModelParams& params, const Dataset& ds,
                               const CorrelativeGraph& graph, Split split, const ModelConfig& cfg,
                               const std::vector<int>& k_list, int n_negatives,
                               std::mt19937_64& rng) {
  const auto records = split_records(ds, split);
  if (records.empty()) {
    throw DomainError(std::string("evaluate_ranking: empty ") + split_name(split) + " split");
  }
  Model model(params, ds, graph, cfg);
  RankingResult result;
  for (int k : k_list) {
    result.mrr[k] = 0.0;
    result.ndcg[k] = 0.0;
  }
  std::unordered_map<int, std::vector<int>> pools;
  for (const auto& rec : records) {
    auto pool_it = pools.find(rec.user);
    if (pool_it == pools.end()) {
      pool_it = pools.emplace(rec.user, never_interacted(ds, rec.user)).first;
    }
    if (pool_it->second.empty()) {
      ++result.skipped;
      continue;
    }
    std::vector<int> candidates{rec.item};
    for (int v : draw_without_replacement(pool_it->second, n_negatives, rng)) {
      candidates.push_back(v);
    }
    const std::vector<double> scores =
        model.predict_scores(rec.user, rec.timestamp, candidates, rng);
    const int rank = rank_of_first(candidates, scores);
    ++result.evaluated;
    for (int k : k_list) {
      result.mrr[k] += mrr_contribution(rank, k);
      result.ndcg[k] += ndcg_contribution(rank, k);
    }
  }
  if (result.evaluated > 0) {
    for (int k : k_list) {
      result.mrr[k] /= result.evaluated;
      result.ndcg[k] /= result.evaluated;
    }
  }
  return result;
}

TrainResult train(const Dataset& ds, const CorrelativeGraph& graph, const TrainConfig& cfg) {
  cfg.validate();
  const auto train_recs = split_records(ds, Split::train);
  if (train_recs.empty()) throw ValidationError("train: empty training split");
  if (split_records(ds, Split::val).empty()) {
    throw ValidationError("train: empty validation split (needed for early stopping)");
  }

  std::mt19937_64 init_rng(mix_seed(cfg.seed, 0));
  ModelParams params = ModelParams::init(ds.n_users, ds.n_items,
                                         static_cast<int>(ds.rating_scale.size()), cfg.d,
                                         cfg.lstm_layers, init_rng);
  Rmsprop optimizer(params.all_params(),
                    {.learning_rate = cfg.learning_rate, .decay = 0.9, .epsilon = 1e-8});
  const ModelConfig mcfg = cfg.model_config();
  Model model(params, ds, graph, mcfg);

  // Negative pools for ranking-mode training, built on first use. Train-only
  // complements: sampling must not learn anything from val/test interactions.
  std::unordered_map<int, std::vector<int>> pools;
  auto pool_for = [&](int user) -> const std::vector<int>& {
    auto it = pools.find(user);
    if (it == pools.end()) it = pools.emplace(user, never_interacted_in_train(ds, user)).first;
    return it->second;
  };

  const bool rating = cfg.mode == Mode::rating;
  TrainResult result;
  result.report.mode = cfg.mode;
  result.report.n_negatives = cfg.n_negatives;
  double best_metric = rating ? std::numeric_limits<double>::infinity()
                              : -std::numeric_limits<double>::infinity();
  int stall = 0;

  std::vector<std::size_t> order(train_recs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
    }
    std::mt19937_64 forward_rng(mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(epoch)));

    double loss_total = 0.0;
    std::size_t loss_count = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Target> targets;
      std::vector<double> labels;
      for (std::size_t i = start; i < end; ++i) {
        const auto& rec = train_recs[order[i]];
        targets.push_back({rec.user, rec.item, rec.timestamp});
        if (rating) {
          labels.push_back(static_cast<double>(rec.rating));
        } else {
          labels.push_back(1.0);
          const auto& pool = pool_for(rec.user);
          if (!pool.empty()) {
            const int neg = pool[uniform_index(forward_rng, pool.size())];
            targets.push_back({rec.user, neg, rec.timestamp});
            labels.push_back(0.0);
          }
        }
      }

      GradTape tape;
      const auto preds = model.forward(tape, targets, true, forward_rng);
      Tensor loss = rating ? mse_loss(tape, preds, labels) : bce_loss(tape, preds, labels);
      if (!std::isfinite(loss.value())) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(batch_index) + ": loss=" + format_g17(loss.value()));
      }
      tape.backward(loss);
      optimizer.step();
      optimizer.zero_grad();
      loss_total += loss.value() * static_cast<double>(labels.size());
      loss_count += labels.size();
    }
    const double train_loss = loss_total / static_cast<double>(loss_count);

    std::mt19937_64 eval_rng(mix_seed(cfg.seed, 3000 + static_cast<std::uint64_t>(epoch)));
    double val_metric;
    if (rating) {
      val_metric = evaluate_rating(params, ds, graph, Split::val, mcfg, eval_rng).first;
    } else {
      val_metric =
          evaluate_ranking(params, ds, graph, Split::val, mcfg, {10}, cfg.n_negatives, eval_rng)
              .ndcg.at(10);
    }
    result.report.loss_curve.emplace_back(epoch, train_loss, val_metric);
    result.report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());

    const bool improved = rating ? val_metric < best_metric : val_metric > best_metric;
    if (improved) {
      best_metric = val_metric;
      result.params = params.clone();
      result.report.best_epoch = epoch;
      stall = 0;
    } else if (++stall >= cfg.patience) {
      break;
    }
  }

  // Final validation metrics of the best parameters.
  std::mt19937_64 final_rng(mix_seed(cfg.seed, 4000));
  if (rating) {
    const auto [rmse, mae] =
        evaluate_rating(result.params, ds, graph, Split::val, mcfg, final_rng);
    result.report.metrics["val_rmse"] = rmse;
    result.report.metrics["val_mae"] = mae;
  } else {
    const auto ranking = evaluate_ranking(result.params, ds, graph, Split::val, mcfg, cfg.eval_k,
                                          cfg.n_negatives, final_rng);
    for (int k : cfg.eval_k) {
      result.report.metrics["val_mrr@" + std::to_string(k)] = ranking.mrr.at(k);
      result.report.metrics["val_ndcg@" + std::to_string(k)] = ranking.ndcg.at(k);
    }
    result.report.skipped_events = ranking.skipped;
  }
  return result;
}

void write_report(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "mode\t" << mode_name(report.mode) << "\n";
  out << "best_epoch\t" << report.best_epoch << "\n";
  if (report.mode == Mode::ranking) {
    out << "n_negatives\t" << report.n_negatives << "\n";
    out << "skipped_events\t" << report.skipped_events << "\n";
  }
  for (const auto& [key, value] : report.metrics) {
    out << key << "\t" << format_g17(value) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

void write_loss_curve(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [epoch, train_loss, val_metric] : report.loss_curve) {
    out << epoch << "\t" << format_g17(train_loss) << "\t" << format_g17(val_metric) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace gnndsr
