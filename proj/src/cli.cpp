#include "gnndsr/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "gnndsr/corr_graph.hpp"
#include "gnndsr/format.hpp"
#include "gnndsr/rng.hpp"

namespace gnndsr {

namespace fs = std::filesystem;

namespace {

// Serializes commands on a workdir. Directory creation is atomic, so a
// second command fails fast instead of corrupting artifacts.
class WorkdirLock {
 public:
  explicit WorkdirLock(const std::string& workdir) : path_(fs::path(workdir) / ".lock") {
    std::error_code ec;
    if (!fs::create_directory(path_, ec) || ec) {
      throw ValidationError("workdir '" + workdir +
                            "' is locked by another command (remove .lock if stale)");
    }
  }
  ~WorkdirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  fs::path path_;
};

std::int64_t parse_i64(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(value, &pos);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': not an integer: '" + value + "'");
  }
  if (pos != value.size()) {
    throw ValidationError("config key '" + key + "': trailing characters in '" + value + "'");
  }
  return v;
}

double parse_f64(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': not a number: '" + value + "'");
  }
  if (pos != value.size()) {
    throw ValidationError("config key '" + key + "': trailing characters in '" + value + "'");
  }
  return v;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::istringstream ss(value);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(static_cast<int>(parse_i64(key, tok)));
  if (out.empty()) throw ValidationError("config key '" + key + "': empty list");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError("config key '" + key + "': expected true|false, got '" + value + "'");
}

void require_workdir(const RunConfig& cfg) {
  if (cfg.workdir.empty()) throw ValidationError("workdir is required");
}

std::string checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? (fs::path(cfg.workdir) / "best.ckpt").string() : cfg.checkpoint;
}

void require_prepared(const RunConfig& cfg) {
  require_workdir(cfg);
  if (!fs::exists(fs::path(cfg.workdir) / "meta")) {
    throw ValidationError("no prepared dataset in '" + cfg.workdir +
                          "'; run `gnndsr prepare` first");
  }
}

void write_effective_config(const RunConfig& cfg, const TrainConfig& tc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  auto list = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(v[i]);
    }
    return s;
  };
  out << "mode\t" << mode_name(tc.mode) << "\n";
  out << "d\t" << tc.d << "\n";
  out << "batch_size\t" << tc.batch_size << "\n";
  out << "learning_rate\t" << format_g17(tc.learning_rate) << "\n";
  out << "max_seq_len\t" << tc.max_seq_len << "\n";
  out << "neighbor_sample\t" << tc.neighbor_sample << "\n";
  out << "corr_k\t" << tc.corr_k << "\n";
  out << "dropout_rate\t" << format_g17(tc.resolved_dropout()) << "\n";
  out << "epochs\t" << tc.epochs << "\n";
  out << "patience\t" << tc.patience << "\n";
  out << "seed\t" << tc.seed << "\n";
  out << "lstm_layers\t" << tc.lstm_layers << "\n";
  out << "ablation\t" << ablation_name(tc.ablation) << "\n";
  out << "use_lstm\t" << (tc.ablation.use_lstm ? "true" : "false") << "\n";
  out << "use_att\t" << (tc.ablation.use_att ? "true" : "false") << "\n";
  out << "use_social\t" << (tc.ablation.use_social ? "true" : "false") << "\n";
  out << "use_correlative\t" << (tc.ablation.use_correlative ? "true" : "false") << "\n";
  out << "eval_k\t" << list(tc.eval_k) << "\n";
  out << "n_negatives\t" << tc.n_negatives << "\n";
  out << "interactions_path\t" << cfg.interactions_path << "\n";
  out << "social_path\t" << cfg.social_path << "\n";
  out << "workdir\t" << cfg.workdir << "\n";
  out << "rating_scale\t" << list(cfg.rating_scale) << "\n";
  out << "ratios\t" << format_g17(cfg.ratios[0]) << "," << format_g17(cfg.ratios[1]) << ","
      << format_g17(cfg.ratios[2]) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "mode",        "d",          "batch_size",        "learning_rate", "max_seq_len",
      "neighbor_sample", "corr_k", "dropout_rate",      "epochs",        "patience",
      "seed",        "lstm_layers", "ablation",         "eval_k",        "n_negatives",
      "interactions_path", "social_path", "workdir",    "rating_scale",  "ratios",
      "force",       "checkpoint", "split",             "user",          "item",
      "out"};
  return keys;
}

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "mode") {
    mode_from_name(value);  // validate
    cfg.mode = value;
  } else if (key == "d") {
    cfg.d = static_cast<int>(parse_i64(key, value));
  } else if (key == "batch_size") {
    cfg.batch_size = static_cast<int>(parse_i64(key, value));
  } else if (key == "learning_rate") {
    cfg.learning_rate = parse_f64(key, value);
  } else if (key == "max_seq_len") {
    cfg.max_seq_len = static_cast<int>(parse_i64(key, value));
  } else if (key == "neighbor_sample") {
    cfg.neighbor_sample = static_cast<int>(parse_i64(key, value));
  } else if (key == "corr_k") {
    cfg.corr_k = static_cast<int>(parse_i64(key, value));
  } else if (key == "dropout_rate") {
    cfg.dropout_rate = parse_f64(key, value);
  } else if (key == "epochs") {
    cfg.epochs = static_cast<int>(parse_i64(key, value));
  } else if (key == "patience") {
    cfg.patience = static_cast<int>(parse_i64(key, value));
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(parse_i64(key, value));
  } else if (key == "lstm_layers") {
    cfg.lstm_layers = static_cast<int>(parse_i64(key, value));
  } else if (key == "ablation") {
    ablation_from_name(value);  // validate
    cfg.ablation = value;
  } else if (key == "eval_k") {
    cfg.eval_k = parse_int_list(key, value);
  } else if (key == "n_negatives") {
    cfg.n_negatives = static_cast<int>(parse_i64(key, value));
  } else if (key == "interactions_path") {
    cfg.interactions_path = value;
  } else if (key == "social_path") {
    cfg.social_path = value;
  } else if (key == "workdir") {
    cfg.workdir = value;
  } else if (key == "rating_scale") {
    cfg.rating_scale = parse_int_list(key, value);
  } else if (key == "ratios") {
    std::istringstream ss(value);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',')) {
      if (i >= 3) throw ValidationError("config key 'ratios': expected 3 values");
      cfg.ratios[i++] = parse_f64(key, tok);
    }
    if (i != 3) throw ValidationError("config key 'ratios': expected 3 values");
  } else if (key == "force") {
    cfg.force = parse_bool(key, value);
  } else if (key == "checkpoint") {
    cfg.checkpoint = value;
  } else if (key == "split") {
    if (value != "val" && value != "test") {
      throw ValidationError("config key 'split': expected val|test, got '" + value + "'");
    }
    cfg.split = value;
  } else if (key == "user") {
    cfg.user = static_cast<int>(parse_i64(key, value));
  } else if (key == "item") {
    cfg.item = static_cast<int>(parse_i64(key, value));
  } else if (key == "out") {
    cfg.out = value;
  } else {
    throw ValidationError("unknown config key '" + key + "'");
  }
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected key<TAB>value");
    }
    apply_key(base, line.substr(0, tab), line.substr(tab + 1));
  }
  return base;
}

TrainConfig to_train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.mode = cfg.mode.empty() ? Mode::rating : mode_from_name(cfg.mode);
  tc.d = cfg.d;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  tc.max_seq_len = cfg.max_seq_len;
  tc.neighbor_sample = cfg.neighbor_sample;
  tc.corr_k = cfg.corr_k;
  tc.dropout_rate = cfg.dropout_rate;
  tc.epochs = cfg.epochs;
  tc.patience = cfg.patience;
  tc.seed = cfg.seed;
  tc.lstm_layers = cfg.lstm_layers;
  tc.ablation = ablation_from_name(cfg.ablation.empty() ? "full" : cfg.ablation);
  tc.eval_k = cfg.eval_k;
  tc.n_negatives = cfg.n_negatives;
  return tc;
}

void cmd_prepare(const RunConfig& cfg) {
  require_workdir(cfg);
  if (cfg.interactions_path.empty()) throw ValidationError("interactions_path is required");
  if (cfg.social_path.empty()) throw ValidationError("social_path is required");

  if (fs::exists(cfg.workdir) && !fs::is_empty(cfg.workdir) && !cfg.force) {
    throw ValidationError("workdir '" + cfg.workdir +
                          "' is not empty; pass --force to overwrite");
  }
  fs::create_directories(cfg.workdir);
  WorkdirLock lock(cfg.workdir);

  IngestOptions options;
  options.rating_scale = cfg.rating_scale;
  options.ratios = cfg.ratios;
  options.require_social = true;
  Dataset ds = build_dataset(cfg.interactions_path, cfg.social_path, options);

  export_dataset(ds, cfg.workdir);
  SparseRatingMatrix matrix = build_rating_matrix(ds);
  CorrelativeGraph graph = build_correlative_graph(matrix, cfg.corr_k);
  export_corr_graph(graph, (fs::path(cfg.workdir) / "corr_graph.tsv").string());

  std::cout << "# Users\t" << ds.n_users << "\n";
  std::cout << "# Items\t" << ds.n_items << "\n";
  std::cout << "# Events\t" << ds.interactions.size() << "\n";
  std::cout << "# Social links\t" << ds.social_link_count() << "\n";
}

void cmd_train(const RunConfig& cfg) {
  require_prepared(cfg);
  WorkdirLock lock(cfg.workdir);
  Dataset ds = load_dataset(cfg.workdir);
  CorrelativeGraph graph =
      load_corr_graph((fs::path(cfg.workdir) / "corr_graph.tsv").string(), ds.n_items);

  TrainConfig tc = to_train_config(cfg);
  write_effective_config(cfg, tc, (fs::path(cfg.workdir) / "effective_config.tsv").string());

  TrainResult result = train(ds, graph, tc);

  CheckpointMeta meta;
  meta.mode = tc.mode;
  meta.d = tc.d;
  meta.lstm_layers = tc.lstm_layers;
  meta.n_users = ds.n_users;
  meta.n_items = ds.n_items;
  meta.rating_scale = ds.rating_scale;
  meta.ablation = tc.ablation;
  meta.seed = tc.seed;
  save_checkpoint((fs::path(cfg.workdir) / "best.ckpt").string(), result.params, meta);
  write_report(result.report, (fs::path(cfg.workdir) / "report.tsv").string());
  write_loss_curve(result.report, (fs::path(cfg.workdir) / "loss_curve.tsv").string());

  std::cout << "epochs_run\t" << result.report.loss_curve.size() << "\n";
  std::cout << "best_epoch\t" << result.report.best_epoch << "\n";
  for (const auto& [key, value] : result.report.metrics) {
    std::cout << key << "\t" << format_g17(value) << "\n";
  }
}

namespace {

struct LoadedRun {
  Dataset ds;
  CorrelativeGraph graph;
  Checkpoint ckpt;
  ModelConfig mcfg;
};

LoadedRun load_run(const RunConfig& cfg) {
  LoadedRun run;
  run.ds = load_dataset(cfg.workdir);
  run.graph = load_corr_graph((fs::path(cfg.workdir) / "corr_graph.tsv").string(), run.ds.n_items);
  run.ckpt = load_checkpoint(checkpoint_path(cfg));
  if (run.ckpt.meta.n_users != run.ds.n_users || run.ckpt.meta.n_items != run.ds.n_items) {
    throw ValidationError("checkpoint entity counts do not match the prepared dataset");
  }
  if (!cfg.mode.empty() && mode_from_name(cfg.mode) != run.ckpt.meta.mode) {
    throw ValidationError(std::string("mode mismatch: checkpoint was trained in ") +
                          mode_name(run.ckpt.meta.mode) + " mode, config asks for " + cfg.mode);
  }
  run.mcfg.mode = run.ckpt.meta.mode;
  run.mcfg.max_seq_len = cfg.max_seq_len;
  run.mcfg.neighbor_sample = cfg.neighbor_sample;
  run.mcfg.dropout_rate = 0.0;  // eval only
  run.mcfg.ablation =
      cfg.ablation.empty() ? run.ckpt.meta.ablation : ablation_from_name(cfg.ablation);
  return run;
}

}  // namespace

void cmd_evaluate(const RunConfig& cfg) {
  require_prepared(cfg);
  WorkdirLock lock(cfg.workdir);
  LoadedRun run = load_run(cfg);
  const Split split = split_from_name(cfg.split);

  EvalReport report;
  report.mode = run.mcfg.mode;
  report.n_negatives = cfg.n_negatives;
  std::mt19937_64 rng(mix_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(split)));
  if (run.mcfg.mode == Mode::rating) {
    const auto [rmse, mae] =
        evaluate_rating(run.ckpt.params, run.ds, run.graph, split, run.mcfg, rng);
    report.metrics["rmse"] = rmse;
    report.metrics["mae"] = mae;
    std::cout << "RMSE\t" << format_g17(rmse) << "\n";
    std::cout << "MAE\t" << format_g17(mae) << "\n";
  } else {
    const RankingResult r = evaluate_ranking(run.ckpt.params, run.ds, run.graph, split, run.mcfg,
                                             cfg.eval_k, cfg.n_negatives, rng);
    report.skipped_events = r.skipped;
    for (int k : cfg.eval_k) {
      report.metrics["mrr@" + std::to_string(k)] = r.mrr.at(k);
      report.metrics["ndcg@" + std::to_string(k)] = r.ndcg.at(k);
      std::cout << "MRR@" << k << "\t" << format_g17(r.mrr.at(k)) << "\n";
      std::cout << "NDCG@" << k << "\t" << format_g17(r.ndcg.at(k)) << "\n";
    }
  }
  write_report(report, (fs::path(cfg.workdir) / ("eval_" + cfg.split + ".tsv")).string());
}

void cmd_export_attention(const RunConfig& cfg) {
  require_prepared(cfg);
  WorkdirLock lock(cfg.workdir);
  LoadedRun run = load_run(cfg);
  if (cfg.user < 0 || cfg.user >= run.ds.n_users) {
    throw LookupError("user " + std::to_string(cfg.user) + " out of range [0, " +
                      std::to_string(run.ds.n_users) + ")");
  }
  if (cfg.item < 0 || cfg.item >= run.ds.n_items) {
    throw LookupError("item " + std::to_string(cfg.item) + " out of range [0, " +
                      std::to_string(run.ds.n_items) + ")");
  }
  Model model(run.ckpt.params, run.ds, run.graph, run.mcfg);
  AttentionTrace trace;
  std::mt19937_64 rng(mix_seed(cfg.seed, 6000));
  GradTape t(false);
  // Full training history: the trace describes the trained state, not one
  // particular target event.
  model.forward(t, {{cfg.user, cfg.item, std::numeric_limits<std::int64_t>::max()}}, false, rng,
                &trace);
  const std::string path =
      cfg.out.empty()
          ? (fs::path(cfg.workdir) /
             ("attention_u" + std::to_string(cfg.user) + "_i" + std::to_string(cfg.item) + ".tsv"))
                .string()
          : cfg.out;
  export_attention(trace, path);
  std::cout << "trace\t" << path << "\n";
}

int dispatch_command(const std::string& command, const RunConfig& cfg) {
  try {
    if (command == "prepare") {
      cmd_prepare(cfg);
    } else if (command == "train") {
      cmd_train(cfg);
    } else if (command == "evaluate") {
      cmd_evaluate(cfg);
    } else if (command == "export-attention") {
      cmd_export_attention(cfg);
    } else {
      throw ValidationError("unknown command '" + command + "'");
    }
    return 0;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gnndsr
