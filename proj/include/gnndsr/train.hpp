#pragma once

#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "gnndsr/checkpoint.hpp"
#include "gnndsr/model.hpp"

namespace gnndsr {

struct TrainConfig {
  Mode mode = Mode::rating;
  int d = 128;
  int batch_size = 256;
  double learning_rate = 0.001;
  int max_seq_len = 30;
  int neighbor_sample = 30;
  int corr_k = 100;
  double dropout_rate = -1.0;  // negative: use the per-mode default
  int epochs = 30;
  int patience = 5;
  std::uint64_t seed = 42;
  int lstm_layers = 1;
  AblationConfig ablation;
  std::vector<int> eval_k{10, 20};
  int n_negatives = 100;

  // 0.5 for rating prediction, 0.4 for item ranking.
  double resolved_dropout() const;
  void validate() const;
  ModelConfig model_config() const;
};

struct EvalReport {
  Mode mode = Mode::rating;
  std::map<std::string, double> metrics;
  // (epoch, mean train loss, validation metric)
  std::vector<std::tuple<int, double, double>> loss_curve;
  std::vector<double> epoch_seconds;  // wall clock, not serialized
  int best_epoch = 0;
  int skipped_events = 0;
  int n_negatives = 0;
};

// Eq-style mean squared error with the 1/(2N) factor.
Tensor mse_loss(GradTape& t, const std::vector<Tensor>& predictions,
                const std::vector<double>& targets);

// Mean binary cross-entropy over probabilities clamped to [1e-7, 1 - 1e-7].
Tensor bce_loss(GradTape& t, const std::vector<Tensor>& probabilities,
                const std::vector<double>& labels);

std::pair<double, double> rmse_mae(const std::vector<double>& predictions,
                                   const std::vector<double>& targets);

// Contribution of a 1-based rank to the truncated metrics (single relevant
// item, so ideal DCG is 1).
double mrr_contribution(int rank, int k);
double ndcg_contribution(int rank, int k);

// 1-based rank of candidates[0] when sorting by score descending, ties by
// ascending item id.
int rank_of_first(const std::vector<int>& candidates, const std::vector<double>& scores);

// Items the user never interacted with in any split, ascending. This is the
// evaluation candidate pool.
std::vector<int> never_interacted(const Dataset& ds, int user);

// Items without a training-split interaction by the user. Training-time
// negative sampling draws from this pool so no val/test interaction can
// shape the training signal.
std::vector<int> never_interacted_in_train(const Dataset& ds, int user);

struct TrainResult {
  ModelParams params;  // best-validation snapshot
  EvalReport report;
};

// Epoch loop with seeded shuffling, RMSprop updates, per-epoch validation,
// and early stopping after `patience` epochs without strict improvement.
TrainResult train(const Dataset& ds, const CorrelativeGraph& graph, const TrainConfig& cfg);

std::pair<double, double> evaluate_rating(const ModelParams& params, const Dataset& ds,
                                          const CorrelativeGraph& graph, Split split,
                                          const ModelConfig& cfg, std::mt19937_64& rng);

struct RankingResult {
  std::map<int, double> mrr;   // K -> MRR@K
  std::map<int, double> ndcg;  // K -> NDCG@K
  int evaluated = 0;
  int skipped = 0;  // events whose user has no never-interacted items
};

RankingResult evaluate_ranking(const ModelParams& params, const Dataset& ds,
                               const CorrelativeGraph& graph, Split split, const ModelConfig& cfg,
                               const std::vector<int>& k_list, int n_negatives,
                               std::mt19937_64& rng);

void write_report(const EvalReport& report, const std::string& path);
void write_loss_curve(const EvalReport& report, const std::string& path);

}  // namespace gnndsr
