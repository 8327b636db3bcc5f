#include "gnndsr/data.hpp"

#include "gnndsr/format.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gnndsr {

namespace fs = std::filesystem;

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ParseError("unknown split label '" + name + "'");
}

int Dataset::rating_index(int rating) const {
  auto it = std::lower_bound(rating_scale.begin(), rating_scale.end(), rating);
  if (it == rating_scale.end() || *it != rating) {
    throw LookupError("rating " + std::to_string(rating) + " not in declared scale");
  }
  return static_cast<int>(it - rating_scale.begin());
}

int Dataset::rating_min() const {
  if (rating_scale.empty()) throw ValidationError("empty rating scale");
  return rating_scale.front();
}

int Dataset::rating_max() const {
  if (rating_scale.empty()) throw ValidationError("empty rating scale");
  return rating_scale.back();
}

std::size_t Dataset::social_link_count() const {
  std::size_t deg = 0;
  for (const auto& adj : social_adj) deg += adj.size();
  return deg / 2;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::int64_t parse_int(const std::string& s, const std::string& context) {
  if (s.empty()) throw ParseError(context + ": empty integer field");
  std::size_t pos = 0;
  std::int64_t value = 0;
  try {
    value = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw ParseError(context + ": not an integer: '" + s + "'");
  }
  if (pos != s.size()) throw ParseError(context + ": trailing characters in '" + s + "'");
  return value;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool skip_line(const std::string& line) {
  return line.empty() || line[0] == '#';
}

// Canonical record order used by the splitter and the matrix builder.
bool record_less(const InteractionRecord& a, const InteractionRecord& b) {
  return std::tie(a.timestamp, a.user, a.item, a.rating) <
         std::tie(b.timestamp, b.user, b.item, b.rating);
}

bool event_less(const Event& a, const Event& b) {
  return std::tie(a.timestamp, a.counterpart, a.rating) <
         std::tie(b.timestamp, b.counterpart, b.rating);
}

}  // namespace

ParsedInteractions parse_interactions(const std::string& path, const std::vector<int>& rating_scale) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open interactions file: " + path);
  std::vector<int> scale(rating_scale);
  std::sort(scale.begin(), scale.end());
  ParsedInteractions out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (skip_line(line)) continue;
    const std::string context = path + ":" + std::to_string(line_no);
    auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw ParseError(context + ": expected 4 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    InteractionRecord rec;
    auto user_it = out.user_index.find(fields[0]);
    if (user_it == out.user_index.end()) {
      user_it = out.user_index.emplace(fields[0], static_cast<int>(out.user_ids.size())).first;
      out.user_ids.push_back(fields[0]);
    }
    rec.user = user_it->second;
    auto item_it = out.item_index.find(fields[1]);
    if (item_it == out.item_index.end()) {
      item_it = out.item_index.emplace(fields[1], static_cast<int>(out.item_ids.size())).first;
      out.item_ids.push_back(fields[1]);
    }
    rec.item = item_it->second;
    rec.rating = static_cast<int>(parse_int(fields[2], context));
    rec.timestamp = parse_int(fields[3], context);
    if (!std::binary_search(scale.begin(), scale.end(), rec.rating)) {
      throw ValidationError(context + ": rating " + std::to_string(rec.rating) +
                            " outside declared scale");
    }
    out.records.push_back(rec);
  }
  return out;
}

std::vector<std::pair<int, int>> parse_social_edges(
    const std::string& path, const std::unordered_map<std::string, int>& user_index) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open social file: " + path);
  std::set<std::pair<int, int>> edges;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (skip_line(line)) continue;
    const std::string context = path + ":" + std::to_string(line_no);
    auto fields = split_tabs(line);
    if (fields.size() != 2) {
      throw ParseError(context + ": expected 2 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    int ids[2];
    for (int k = 0; k < 2; ++k) {
      auto it = user_index.find(fields[k]);
      if (it == user_index.end()) {
        throw ValidationError(context + ": unknown user '" + fields[k] + "'");
      }
      ids[k] = it->second;
    }
    if (ids[0] == ids[1]) continue;  // self-loop
    edges.emplace(std::min(ids[0], ids[1]), std::max(ids[0], ids[1]));
  }
  return {edges.begin(), edges.end()};
}

std::vector<std::vector<int>> symmetrize_edges(const std::vector<std::pair<int, int>>& edges,
                                               int n_users) {
  std::vector<std::set<int>> adj(n_users);
  for (auto [a, b] : edges) {
    if (a == b) continue;
    if (a < 0 || b < 0 || a >= n_users || b >= n_users) {
      throw ValidationError("social edge (" + std::to_string(a) + ", " + std::to_string(b) +
                            ") outside user range [0, " + std::to_string(n_users) + ")");
    }
    adj[a].insert(b);
    adj[b].insert(a);
  }
  std::vector<std::vector<int>> out(n_users);
  for (int u = 0; u < n_users; ++u) out[u].assign(adj[u].begin(), adj[u].end());
  return out;
}

std::vector<std::vector<int>> parse_social(const std::string& path,
                                           const std::unordered_map<std::string, int>& user_index,
                                           int n_users) {
  return symmetrize_edges(parse_social_edges(path, user_index), n_users);
}

void chronological_split(std::vector<InteractionRecord>& records, const std::array<double, 3>& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw ValidationError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
  if (records.size() < 3) {
    throw ValidationError("need at least 3 interactions to split, got " +
                          std::to_string(records.size()));
  }
  std::sort(records.begin(), records.end(), record_less);
  const auto n = records.size();
  const auto train_end = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[0]));
  const auto val_end =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * (ratios[0] + ratios[1])));
  for (std::size_t i = 0; i < n; ++i) {
    records[i].split = i < train_end ? Split::train : i < val_end ? Split::val : Split::test;
  }
}

void build_sequences(Dataset& ds) {
  ds.user_seqs.assign(ds.n_users, {});
  ds.item_seqs.assign(ds.n_items, {});
  for (const auto& rec : ds.interactions) {
    if (rec.split != Split::train) continue;
    ds.user_seqs[rec.user].push_back({rec.item, rec.rating, rec.timestamp});
    ds.item_seqs[rec.item].push_back({rec.user, rec.rating, rec.timestamp});
  }
  for (auto& seq : ds.user_seqs) std::sort(seq.begin(), seq.end(), event_less);
  for (auto& seq : ds.item_seqs) std::sort(seq.begin(), seq.end(), event_less);
}

SparseRatingMatrix build_rating_matrix(const Dataset& ds) {
  // Records are kept in canonical order, so a later write is a later (or
  // equal) timestamp: last write wins implements the dedup rule.
  std::vector<std::map<int, double>> cols(ds.n_items);
  for (const auto& rec : ds.interactions) {
    if (rec.split != Split::train) continue;
    cols[rec.item][rec.user] = static_cast<double>(rec.rating);
  }
  SparseRatingMatrix m;
  m.cols.resize(ds.n_items);
  for (int j = 0; j < ds.n_items; ++j) m.cols[j].assign(cols[j].begin(), cols[j].end());
  return m;
}

Dataset make_dataset_from_records(std::vector<InteractionRecord> records,
                                  std::vector<std::pair<int, int>> social_edges,
                                  std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                                  const IngestOptions& options) {
  if (options.rating_scale.empty()) throw ValidationError("rating scale must not be empty");
  std::vector<int> scale(options.rating_scale);
  std::sort(scale.begin(), scale.end());
  scale.erase(std::unique(scale.begin(), scale.end()), scale.end());
  for (int r : scale) {
    if (r == 0) throw ValidationError("rating 0 is reserved for unknown interactions");
  }

  const int n_users0 = static_cast<int>(user_ids.size());
  const int n_items0 = static_cast<int>(item_ids.size());
  for (const auto& rec : records) {
    if (rec.user < 0 || rec.user >= n_users0 || rec.item < 0 || rec.item >= n_items0) {
      throw ValidationError("interaction references entity outside index range");
    }
    if (!std::binary_search(scale.begin(), scale.end(), rec.rating)) {
      throw ValidationError("rating " + std::to_string(rec.rating) + " outside declared scale");
    }
  }

  std::vector<char> user_alive(n_users0, 1), item_alive(n_items0, 1);
  std::vector<InteractionRecord> live;

  // Filter to a fixpoint: the split moves when records are dropped, which can
  // strand further users/items without training interactions.
  while (true) {
    live.clear();
    for (const auto& rec : records) {
      if (user_alive[rec.user] && item_alive[rec.item]) live.push_back(rec);
    }
    chronological_split(live, options.ratios);

    std::vector<char> user_has_train(n_users0, 0), item_has_train(n_items0, 0);
    for (const auto& rec : live) {
      if (rec.split == Split::train) {
        user_has_train[rec.user] = 1;
        item_has_train[rec.item] = 1;
      }
    }
    std::vector<int> degree(n_users0, 0);
    for (auto [a, b] : social_edges) {
      if (a != b && user_alive[a] && user_alive[b]) {
        ++degree[a];
        ++degree[b];
      }
    }
    bool changed = false;
    for (int u = 0; u < n_users0; ++u) {
      if (!user_alive[u]) continue;
      if (!user_has_train[u] || (options.require_social && degree[u] == 0)) {
        user_alive[u] = 0;
        changed = true;
      }
    }
    for (int v = 0; v < n_items0; ++v) {
      if (!item_alive[v]) continue;
      if (!item_has_train[v]) {
        item_alive[v] = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }

  // Compact indices, preserving first-seen order.
  std::vector<int> user_map(n_users0, -1), item_map(n_items0, -1);
  Dataset ds;
  for (int u = 0; u < n_users0; ++u) {
    if (user_alive[u]) {
      user_map[u] = ds.n_users++;
      ds.user_ids.push_back(std::move(user_ids[u]));
    }
  }
  for (int v = 0; v < n_items0; ++v) {
    if (item_alive[v]) {
      item_map[v] = ds.n_items++;
      ds.item_ids.push_back(std::move(item_ids[v]));
    }
  }
  ds.rating_scale = std::move(scale);
  ds.ratios = options.ratios;
  ds.interactions = std::move(live);
  for (auto& rec : ds.interactions) {
    rec.user = user_map[rec.user];
    rec.item = item_map[rec.item];
  }
  std::vector<std::pair<int, int>> kept_edges;
  for (auto [a, b] : social_edges) {
    if (a != b && user_map[a] >= 0 && user_map[b] >= 0) {
      kept_edges.emplace_back(user_map[a], user_map[b]);
    }
  }
  ds.social_adj = symmetrize_edges(kept_edges, ds.n_users);
  build_sequences(ds);
  return ds;
}

Dataset build_dataset(const std::string& interactions_path, const std::string& social_path,
                      const IngestOptions& options) {
  ParsedInteractions parsed = parse_interactions(interactions_path, options.rating_scale);
  std::vector<std::pair<int, int>> edges;
  if (!social_path.empty()) edges = parse_social_edges(social_path, parsed.user_index);
  return make_dataset_from_records(std::move(parsed.records), std::move(edges),
                                   std::move(parsed.user_ids), std::move(parsed.item_ids), options);
}

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

void export_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ostringstream meta;
    meta << "n_users\t" << ds.n_users << "\n";
    meta << "n_items\t" << ds.n_items << "\n";
    meta << "rating_scale\t";
    for (std::size_t i = 0; i < ds.rating_scale.size(); ++i) {
      if (i) meta << ",";
      meta << ds.rating_scale[i];
    }
    meta << "\n";
    meta << "ratios\t" << format_g17(ds.ratios[0]) << "," << format_g17(ds.ratios[1]) << ","
         << format_g17(ds.ratios[2]) << "\n";
    write_file(dir + "/meta", meta.str());
  }
  {
    std::ostringstream out;
    for (const auto& rec : ds.interactions) {
      out << rec.user << "\t" << rec.item << "\t" << rec.rating << "\t" << rec.timestamp << "\t"
          << split_name(rec.split) << "\n";
    }
    write_file(dir + "/interactions.tsv", out.str());
  }
  {
    std::ostringstream out;
    for (int u = 0; u < ds.n_users; ++u) {
      for (int v : ds.social_adj[u]) {
        if (u < v) out << u << "\t" << v << "\n";
      }
    }
    write_file(dir + "/social.tsv", out.str());
  }
  {
    std::ostringstream out;
    for (int u = 0; u < ds.n_users; ++u) out << ds.user_ids[u] << "\t" << u << "\n";
    write_file(dir + "/users.map", out.str());
    std::ostringstream out2;
    for (int v = 0; v < ds.n_items; ++v) out2 << ds.item_ids[v] << "\t" << v << "\n";
    write_file(dir + "/items.map", out2.str());
  }
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  std::string scale_field, ratio_field;
  for (const auto& line : read_lines(dir + "/meta")) {
    auto fields = split_tabs(line);
    if (fields.size() != 2) throw ParseError(dir + "/meta: malformed line '" + line + "'");
    if (fields[0] == "n_users") ds.n_users = static_cast<int>(parse_int(fields[1], "meta"));
    else if (fields[0] == "n_items") ds.n_items = static_cast<int>(parse_int(fields[1], "meta"));
    else if (fields[0] == "rating_scale") scale_field = fields[1];
    else if (fields[0] == "ratios") ratio_field = fields[1];
    else throw ParseError(dir + "/meta: unknown key '" + fields[0] + "'");
  }
  {
    std::istringstream ss(scale_field);
    std::string tok;
    while (std::getline(ss, tok, ',')) ds.rating_scale.push_back(static_cast<int>(parse_int(tok, "meta rating_scale")));
  }
  {
    std::istringstream ss(ratio_field);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',')) {
      if (i >= 3) throw ParseError(dir + "/meta: too many ratios");
      ds.ratios[i++] = std::stod(tok);
    }
    if (i != 3) throw ParseError(dir + "/meta: expected 3 ratios");
  }

  for (const auto& line : read_lines(dir + "/interactions.tsv")) {
    auto fields = split_tabs(line);
    if (fields.size() != 5) throw ParseError(dir + "/interactions.tsv: malformed line '" + line + "'");
    InteractionRecord rec;
    rec.user = static_cast<int>(parse_int(fields[0], "interactions"));
    rec.item = static_cast<int>(parse_int(fields[1], "interactions"));
    rec.rating = static_cast<int>(parse_int(fields[2], "interactions"));
    rec.timestamp = parse_int(fields[3], "interactions");
    rec.split = split_from_name(fields[4]);
    ds.interactions.push_back(rec);
  }

  std::vector<std::pair<int, int>> edges;
  if (fs::exists(dir + "/social.tsv")) {
    for (const auto& line : read_lines(dir + "/social.tsv")) {
      auto fields = split_tabs(line);
      if (fields.size() != 2) throw ParseError(dir + "/social.tsv: malformed line '" + line + "'");
      edges.emplace_back(static_cast<int>(parse_int(fields[0], "social")),
                         static_cast<int>(parse_int(fields[1], "social")));
    }
  }
  ds.social_adj = symmetrize_edges(edges, ds.n_users);

  auto load_map = [&](const std::string& path, int expected) {
    std::vector<std::string> ids(expected);
    for (const auto& line : read_lines(path)) {
      auto fields = split_tabs(line);
      if (fields.size() != 2) throw ParseError(path + ": malformed line '" + line + "'");
      const int idx = static_cast<int>(parse_int(fields[1], path));
      if (idx < 0 || idx >= expected) throw ParseError(path + ": index out of range");
      ids[idx] = fields[0];
    }
    return ids;
  };
  ds.user_ids = load_map(dir + "/users.map", ds.n_users);
  ds.item_ids = load_map(dir + "/items.map", ds.n_items);

  build_sequences(ds);
  return ds;
}

std::vector<Event> events_before(const std::vector<Event>& seq, std::int64_t tau, int max_len) {
  std::vector<Event> out;
  for (const auto& e : seq) {
    if (e.timestamp < tau) out.push_back(e);
  }
  std::sort(out.begin(), out.end(), event_less);
  if (max_len > 0 && static_cast<int>(out.size()) > max_len) {
    out.erase(out.begin(), out.end() - max_len);
  }
  return out;
}

std::vector<InteractionRecord> split_records(const Dataset& ds, Split split) {
  std::vector<InteractionRecord> out;
  for (const auto& rec : ds.interactions) {
    if (rec.split == split) out.push_back(rec);
  }
  return out;
}

}  // namespace gnndsr
