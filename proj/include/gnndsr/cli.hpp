#pragma once

#include <array>
#include <string>
#include <vector>

#include "gnndsr/train.hpp"

namespace gnndsr {

// Effective run settings: defaults, overlaid by a `key<TAB>value` config
// file, overlaid by command-line flags of the same names.
struct RunConfig {
  std::string mode;  // empty: rating for train, checkpoint mode for evaluate
  int d = 128;
  int batch_size = 256;
  double learning_rate = 0.001;
  int max_seq_len = 30;
  int neighbor_sample = 30;
  int corr_k = 100;
  double dropout_rate = -1.0;  // negative: per-mode default
  int epochs = 30;
  int patience = 5;
  std::uint64_t seed = 42;
  int lstm_layers = 1;
  std::string ablation;  // empty: full for train, checkpoint value for evaluate
  std::vector<int> eval_k{10, 20};
  int n_negatives = 100;

  std::string interactions_path;
  std::string social_path;
  std::string workdir;
  std::vector<int> rating_scale{1, 2, 3, 4, 5};
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  bool force = false;

  std::string checkpoint;      // default: <workdir>/best.ckpt
  std::string split = "test";  // evaluate: val|test
  int user = -1;               // export-attention target pair
  int item = -1;
  std::string out;  // export-attention output path override
};

// Keys accepted in config files and as --<key> flags.
const std::vector<std::string>& config_keys();

// Set one field from its textual form; unknown key or bad value throws.
void apply_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Overlay `key<TAB>value` lines (# comments allowed) onto `base`.
RunConfig load_config_file(const std::string& path, RunConfig base);

TrainConfig to_train_config(const RunConfig& cfg);

void cmd_prepare(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_export_attention(const RunConfig& cfg);

// Runs a command and maps errors to the documented exit codes:
// 0 success, 1 validation/parse error, 2 divergence.
int dispatch_command(const std::string& command, const RunConfig& cfg);

}  // namespace gnndsr
