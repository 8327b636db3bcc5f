#include "gnndsr/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "gnndsr/corr_graph.hpp"
#include "gnndsr/rng.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace gnndsr;
using testsup::TempDir;

namespace fs = std::filesystem;

namespace {

// 4 users x 4 items, 20 events; u3 has exactly one friend.
void write_fixture(const TempDir& dir) {
  std::ostringstream inter;
  for (int e = 0; e < 20; ++e) {
    inter << "u" << e % 4 << "\ti" << (e * 7 + 3) % 4 << "\t" << 1 + e % 5 << "\t" << e + 1
          << "\n";
  }
  dir.write("interactions.tsv", inter.str());
  dir.write("social.tsv", "u0\tu1\nu1\tu2\nu2\tu0\nu3\tu0\n");
}

RunConfig fixture_config(const TempDir& dir, const std::string& workdir) {
  RunConfig cfg;
  cfg.interactions_path = dir.file("interactions.tsv");
  cfg.social_path = dir.file("social.tsv");
  cfg.workdir = dir.file(workdir);
  cfg.d = 4;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 7;
  return cfg;
}

std::map<std::string, std::string> read_kv(const std::string& path) {
  std::map<std::string, std::string> out;
  std::istringstream in(testsup::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

}  // namespace

TEST_CASE("config file parsing and flag precedence") {
  TempDir dir("cfg");
  auto path = dir.write("run.cfg",
                        "# experiment\nmode\tranking\nd\t16\nlearning_rate\t0.01\n"
                        "eval_k\t5,10\nrating_scale\t1\nratios\t0.7,0.2,0.1\n");
  RunConfig cfg = load_config_file(path, RunConfig{});
  CHECK(cfg.mode == "ranking");
  CHECK(cfg.d == 16);
  CHECK(cfg.learning_rate == 0.01);
  CHECK(cfg.eval_k == std::vector<int>{5, 10});
  CHECK(cfg.rating_scale == std::vector<int>{1});
  CHECK(cfg.ratios[0] == 0.7);

  // A later apply_key overrides the file value, as command-line flags do.
  apply_key(cfg, "d", "8");
  CHECK(cfg.d == 8);

  CHECK_THROWS_AS(apply_key(cfg, "no_such_key", "1"), ValidationError);
  CHECK_THROWS_AS(apply_key(cfg, "d", "eight"), ValidationError);
  CHECK_THROWS_AS(apply_key(cfg, "mode", "both"), ValidationError);
  CHECK_THROWS_AS(apply_key(cfg, "split", "train"), ValidationError);
  auto bad = dir.write("bad.cfg", "d 16\n");
  CHECK_THROWS_AS(load_config_file(bad, RunConfig{}), ParseError);
}

TEST_CASE("prepare writes the documented manifest and refuses reruns") {
  TempDir dir("prep");
  write_fixture(dir);
  RunConfig cfg = fixture_config(dir, "run");
  cmd_prepare(cfg);
  for (const char* name :
       {"meta", "interactions.tsv", "social.tsv", "users.map", "items.map", "corr_graph.tsv"}) {
    CHECK(fs::exists(fs::path(cfg.workdir) / name));
  }
  CHECK(!fs::exists(fs::path(cfg.workdir) / ".lock"));

  const std::string before = testsup::read_file(cfg.workdir + "/interactions.tsv");
  CHECK(dispatch_command("prepare", cfg) == 1);  // refusal, exit code 1
  CHECK(testsup::read_file(cfg.workdir + "/interactions.tsv") == before);

  cfg.force = true;
  CHECK(dispatch_command("prepare", cfg) == 0);
}

TEST_CASE("prepared corr graph matches a brute-force reconstruction") {
  TempDir dir("prep-corr");
  write_fixture(dir);
  RunConfig cfg = fixture_config(dir, "run");
  cmd_prepare(cfg);

  Dataset ds = load_dataset(cfg.workdir);
  SparseRatingMatrix m = build_rating_matrix(ds);
  // Dense oracle over the training matrix.
  std::vector<std::vector<double>> dense(ds.n_users, std::vector<double>(ds.n_items, 0.0));
  for (int j = 0; j < ds.n_items; ++j) {
    for (const auto& [u, r] : m.cols[j]) dense[u][j] = r;
  }
  CorrelativeGraph from_disk = load_corr_graph(cfg.workdir + "/corr_graph.tsv", ds.n_items);
  for (int j = 0; j < ds.n_items; ++j) {
    std::vector<std::pair<int, double>> sims;
    for (int other = 0; other < ds.n_items; ++other) {
      if (other == j) continue;
      double dot = 0, nj = 0, no = 0;
      for (int u = 0; u < ds.n_users; ++u) {
        dot += dense[u][j] * dense[u][other];
        nj += dense[u][j] * dense[u][j];
        no += dense[u][other] * dense[u][other];
      }
      if (dot > 0) sims.emplace_back(other, dot / (std::sqrt(nj) * std::sqrt(no)));
    }
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (static_cast<int>(sims.size()) > 100) sims.resize(100);
    REQUIRE(from_disk.adj[j].size() == sims.size());
    for (std::size_t e = 0; e < sims.size(); ++e) {
      CHECK(from_disk.adj[j][e].first == sims[e].first);
      CHECK(from_disk.adj[j][e].second == doctest::Approx(sims[e].second).epsilon(1e-12));
    }
  }
}

TEST_CASE("train writes artifacts and the ablation flag lands in the effective config") {
  TempDir dir("train");
  write_fixture(dir);
  RunConfig cfg = fixture_config(dir, "run");
  cmd_prepare(cfg);
  cfg.ablation = "w/o_SC";
  cmd_train(cfg);
  for (const char* name : {"best.ckpt", "report.tsv", "loss_curve.tsv", "effective_config.tsv"}) {
    CHECK(fs::exists(fs::path(cfg.workdir) / name));
  }
  auto effective = read_kv(cfg.workdir + "/effective_config.tsv");
  CHECK(effective.at("ablation") == "w/o_SC");
  CHECK(effective.at("use_social") == "false");
  CHECK(effective.at("use_correlative") == "false");
  CHECK(effective.at("use_lstm") == "true");
  CHECK(effective.at("mode") == "rating");
  CHECK(effective.at("dropout_rate") == "0.5");
  auto report = read_kv(cfg.workdir + "/report.tsv");
  CHECK(report.count("val_rmse") == 1);
  CHECK(std::stod(report.at("val_rmse")) >= 0.0);
}

TEST_CASE("training twice with one seed is byte-identical") {
  TempDir dir("det");
  write_fixture(dir);
  for (const char* run : {"a", "b"}) {
    RunConfig cfg = fixture_config(dir, run);
    cmd_prepare(cfg);
    cmd_train(cfg);
  }
  CHECK(testsup::read_file(dir.file("a") + "/loss_curve.tsv") ==
        testsup::read_file(dir.file("b") + "/loss_curve.tsv"));
  CHECK(!testsup::read_file(dir.file("a") + "/loss_curve.tsv").empty());
  CHECK(testsup::read_file(dir.file("a") + "/report.tsv") ==
        testsup::read_file(dir.file("b") + "/report.tsv"));
}

TEST_CASE("evaluate rejects a mode mismatch and writes per-split reports") {
  TempDir dir("eval");
  write_fixture(dir);
  RunConfig cfg = fixture_config(dir, "run");
  cmd_prepare(cfg);
  cmd_train(cfg);

  cfg.mode = "ranking";
  CHECK(dispatch_command("evaluate", cfg) == 1);

  cfg.mode.clear();
  cfg.split = "val";
  cmd_evaluate(cfg);
  cfg.split = "test";
  cmd_evaluate(cfg);
  CHECK(fs::exists(fs::path(cfg.workdir) / "eval_val.tsv"));
  CHECK(fs::exists(fs::path(cfg.workdir) / "eval_test.tsv"));
  CHECK(read_kv(cfg.workdir + "/eval_val.tsv").count("rmse") == 1);
}

TEST_CASE("zero-head checkpoint evaluates to the clamp-floor oracle") {
  TempDir dir("zero");
  write_fixture(dir);
  RunConfig cfg = fixture_config(dir, "run");
  cmd_prepare(cfg);
  Dataset ds = load_dataset(cfg.workdir);

  CheckpointMeta meta;
  meta.mode = Mode::rating;
  meta.d = 4;
  meta.lstm_layers = 1;
  meta.n_users = ds.n_users;
  meta.n_items = ds.n_items;
  meta.rating_scale = ds.rating_scale;
  meta.seed = 7;
  ModelParams zero =
      ModelParams::build(ds.n_users, ds.n_items, static_cast<int>(ds.rating_scale.size()), 4, 1);
  save_checkpoint(cfg.workdir + "/zero.ckpt", zero, meta);

  cfg.checkpoint = cfg.workdir + "/zero.ckpt";
  cfg.split = "test";
  cmd_evaluate(cfg);
  auto report = read_kv(cfg.workdir + "/eval_test.tsv");

  // Raw predictions are all 0, clamped to the scale floor 1.
  double sq = 0.0, ab = 0.0;
  int n = 0;
  for (const auto& rec : split_records(ds, Split::test)) {
    sq += (1.0 - rec.rating) * (1.0 - rec.rating);
    ab += std::abs(1.0 - rec.rating);
    ++n;
  }
  REQUIRE(n > 0);
  CHECK(std::stod(report.at("rmse")) == doctest::Approx(std::sqrt(sq / n)).epsilon(1e-12));
  CHECK(std::stod(report.at("mae")) == doctest::Approx(ab / n).epsilon(1e-12));
}

TEST_CASE("export-attention: single-friend user gets weight one") {
  TempDir dir("attn");
  write_fixture(dir);
  RunConfig cfg = fixture_config(dir, "run");
  cmd_prepare(cfg);
  cmd_train(cfg);

  Dataset ds = load_dataset(cfg.workdir);
  // Raw u3 has exactly one friend (u0).
  int u3 = -1;
  for (int u = 0; u < ds.n_users; ++u) {
    if (ds.user_ids[u] == "u3") u3 = u;
  }
  REQUIRE(u3 >= 0);
  REQUIRE(ds.social_adj[u3].size() == 1);

  cfg.user = u3;
  cfg.item = 0;
  cfg.out = dir.file("trace.tsv");
  cmd_export_attention(cfg);

  std::istringstream in(testsup::read_file(dir.file("trace.tsv")));
  std::string line;
  std::map<std::string, double> group_sums;
  int uu_rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string block, target, neighbor, weight;
    std::getline(fields, block, '\t');
    std::getline(fields, target, '\t');
    std::getline(fields, neighbor, '\t');
    std::getline(fields, weight, '\t');
    group_sums[block + ":" + target] += std::stod(weight);
    if (block == "uu") {
      ++uu_rows;
      CHECK(std::stod(weight) == 1.0);
    }
  }
  CHECK(uu_rows == 1);
  for (const auto& [group, total] : group_sums) {
    CHECK(std::abs(total - 1.0) < 1e-6);
  }

  cfg.user = 999;
  CHECK(dispatch_command("export-attention", cfg) == 1);
}

TEST_CASE("case-study layout: ten user rows and ten item rows") {
  // Ten friends and ten correlative neighbors; the forward runs at a time
  // before any event, so the pair's own interaction blocks are empty and the
  // trace holds exactly the two relational blocks.
  std::vector<InteractionRecord> records;
  std::int64_t ts = 10;
  for (int u = 1; u <= 10; ++u) {
    for (int rep = 0; rep < 2; ++rep) {
      records.push_back({u, 11 + (u + rep) % 10, 1 + (u + rep) % 5, ts++, Split::train});
    }
  }
  records.push_back({11, 0, 3, ts++, Split::train});   // keeps user 11 and item 0 alive
  records.push_back({0, 20, 3, ts++, Split::train});   // keeps user 0 alive
  std::vector<std::pair<int, int>> edges;
  for (int u = 1; u <= 10; ++u) edges.emplace_back(0, u);
  // Items 1..10 never appear, so compaction maps 11..20 onto 1..10.
  Dataset ds = testsup::dataset_from_records(records, edges, 12, 21,
                                             {.rating_scale = {1, 2, 3, 4, 5}, .ratios = {1, 0, 0}});
  REQUIRE(ds.n_items == 11);
  REQUIRE(ds.social_adj[0].size() == 10);
  REQUIRE(events_before(ds.user_seqs[0], 1, 30).empty());
  REQUIRE(events_before(ds.item_seqs[0], 1, 30).empty());

  CorrelativeGraph g;
  g.adj.resize(ds.n_items);
  for (int k = 0; k < 10; ++k) g.adj[0].emplace_back(1 + k, 1.0 - 0.05 * k);

  std::mt19937_64 rng(3);
  ModelParams p = ModelParams::init(ds.n_users, ds.n_items, 5, 4, 1, rng);
  Model model(p, ds, g, ModelConfig{});
  AttentionTrace trace;
  GradTape t(false);
  std::mt19937_64 fwd_rng(5);
  model.forward(t, {{0, 0, 1}}, false, fwd_rng, &trace);

  TempDir dir("fig5");
  export_attention(trace, dir.file("trace.tsv"));
  std::istringstream in(testsup::read_file(dir.file("trace.tsv")));
  std::string line;
  int uu_rows = 0, vv_rows = 0, other_rows = 0;
  while (std::getline(in, line)) {
    if (line.rfind("uu\t", 0) == 0) {
      ++uu_rows;
    } else if (line.rfind("vv\t", 0) == 0) {
      ++vv_rows;
    } else {
      ++other_rows;
    }
  }
  CHECK(uu_rows == 10);
  CHECK(vv_rows == 10);
  CHECK(other_rows == 0);
}

TEST_CASE("exit codes: success 0, validation 1, divergence 2") {
  TempDir dir("codes");
  write_fixture(dir);
  RunConfig cfg = fixture_config(dir, "run");
  CHECK(dispatch_command("prepare", cfg) == 0);

  RunConfig missing = cfg;
  missing.workdir = dir.file("nowhere");
  CHECK(dispatch_command("train", missing) == 1);

  RunConfig diverging = cfg;
  diverging.learning_rate = 1e300;
  diverging.batch_size = 4;
  CHECK(dispatch_command("train", diverging) == 2);

  CHECK(dispatch_command("frobnicate", cfg) == 1);
}

TEST_CASE("workdir lock blocks concurrent commands") {
  TempDir dir("lock");
  write_fixture(dir);
  RunConfig cfg = fixture_config(dir, "run");
  cmd_prepare(cfg);
  fs::create_directory(fs::path(cfg.workdir) / ".lock");
  CHECK(dispatch_command("train", cfg) == 1);
  fs::remove(fs::path(cfg.workdir) / ".lock");
}

TEST_CASE("the installed binary runs end to end") {
#ifdef GNNDSR_BIN
  TempDir dir("bin");
  write_fixture(dir);
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(GNNDSR_BIN) + " " + args + " > " + dir.file("stdout.txt") +
                            " 2> " + dir.file("stderr.txt");
    return std::system(cmd.c_str());
  };
  const std::string common = "--interactions_path " + dir.file("interactions.tsv") +
                             " --social_path " + dir.file("social.tsv") + " --workdir " +
                             dir.file("run");
  CHECK(run("prepare " + common) == 0);
  CHECK(testsup::read_file(dir.file("stdout.txt")).find("# Users") != std::string::npos);
  // Rerun refused with exit code 1.
  CHECK(WEXITSTATUS(run("prepare " + common)) == 1);
  CHECK(run("train --workdir " + dir.file("run") + " --d 4 --epochs 2 --batch_size 8 --seed 7") ==
        0);
  CHECK(run("evaluate --workdir " + dir.file("run") + " --split test") == 0);
  CHECK(testsup::read_file(dir.file("stdout.txt")).find("RMSE") != std::string::npos);
#endif
}
