// gnndsr: prepare data, train, evaluate, and export attention traces for the
// dual-representation social recommender.

#include <map>
#include <string>

#include <CLI11.hpp>

#include "gnndsr/cli.hpp"

namespace {

struct SubState {
  CLI::App* cmd = nullptr;
  std::string config_path;
  std::map<std::string, std::string> values;
  bool force = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GNN-DSR social recommendation engine"};
  app.require_subcommand(1);

  const std::map<std::string, std::string> commands{
      {"prepare", "parse raw files, split, and build the correlative graph"},
      {"train", "train on a prepared workdir and write best.ckpt"},
      {"evaluate", "score a checkpoint on the val or test split"},
      {"export-attention", "dump attention weights for one user-item pair"},
  };

  std::map<std::string, SubState> states;
  for (const auto& [name, description] : commands) {
    SubState& st = states[name];
    st.cmd = app.add_subcommand(name, description);
    st.cmd->add_option("--config", st.config_path, "flat key<TAB>value config file");
    for (const std::string& key : gnndsr::config_keys()) {
      if (key == "force") continue;
      st.cmd->add_option("--" + key, st.values[key]);
    }
    st.cmd->add_flag("--force", st.force, "overwrite a non-empty workdir");
  }

  CLI11_PARSE(app, argc, argv);

  for (const auto& [name, st] : states) {
    if (!st.cmd->parsed()) continue;
    gnndsr::RunConfig cfg;
    try {
      if (!st.config_path.empty()) cfg = gnndsr::load_config_file(st.config_path, cfg);
      for (const auto& [key, value] : st.values) {
        if (st.cmd->count("--" + key) > 0) gnndsr::apply_key(cfg, key, value);
      }
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
    if (st.force) cfg.force = true;
    return gnndsr::dispatch_command(name, cfg);
  }
  return 1;
}
