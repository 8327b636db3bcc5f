#include "gnndsr/corr_graph.hpp"

#include "gnndsr/format.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gnndsr/rng.hpp"

namespace gnndsr {

double cosine_similarity(const SparseRatingMatrix& m, int j, int k) {
  const int n_items = static_cast<int>(m.cols.size());
  if (j < 0 || j >= n_items || k < 0 || k >= n_items) {
    throw LookupError("item index out of range [0, " + std::to_string(n_items) + ")");
  }
  const auto& cj = m.cols[j];
  const auto& ck = m.cols[k];
  if (cj.empty() || ck.empty()) return 0.0;
  double dot = 0.0, nj = 0.0, nk = 0.0;
  for (const auto& [u, r] : cj) nj += r * r;
  for (const auto& [u, r] : ck) nk += r * r;
  // Merge the two user-sorted columns.
  std::size_t a = 0, b = 0;
  while (a < cj.size() && b < ck.size()) {
    if (cj[a].first == ck[b].first) {
      dot += cj[a].second * ck[b].second;
      ++a;
      ++b;
    } else if (cj[a].first < ck[b].first) {
      ++a;
    } else {
      ++b;
    }
  }
  if (dot == 0.0) return 0.0;
  return dot / (std::sqrt(nj) * std::sqrt(nk));
}

CorrelativeGraph build_correlative_graph(const SparseRatingMatrix& m, int k) {
  if (k < 1) throw DomainError("top-k must be at least 1");
  const int n_items = static_cast<int>(m.cols.size());
  CorrelativeGraph g;
  g.k = k;
  g.adj.resize(n_items);
  for (int j = 0; j < n_items; ++j) {
    if (m.cols[j].empty()) continue;
    std::vector<std::pair<int, double>> sims;
    for (int other = 0; other < n_items; ++other) {
      if (other == j) continue;
      const double s = cosine_similarity(m, j, other);
      if (s > 0.0) sims.emplace_back(other, s);
    }
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (static_cast<int>(sims.size()) > k) sims.resize(k);
    g.adj[j] = std::move(sims);
  }
  return g;
}

std::vector<int> sample_neighbors(const std::vector<int>& adj, int s, std::mt19937_64& rng) {
  if (s < 1) throw DomainError("sample size must be at least 1");
  if (static_cast<int>(adj.size()) <= s) return adj;
  // Partial Fisher-Yates over an index array.
  std::vector<int> idx(adj.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::vector<int> out;
  out.reserve(s);
  for (int i = 0; i < s; ++i) {
    const auto pick = i + static_cast<int>(uniform_index(rng, idx.size() - i));
    std::swap(idx[i], idx[pick]);
    out.push_back(adj[idx[i]]);
  }
  return out;
}

void export_corr_graph(const CorrelativeGraph& g, const std::string& path) {
  std::ostringstream out;
  for (std::size_t j = 0; j < g.adj.size(); ++j) {
    for (const auto& [nb, sim] : g.adj[j]) {
      out << j << "\t" << nb << "\t" << format_g17(sim) << "\n";
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << "# k\t" << g.k << "\n" << out.str();
  if (!f) throw IoError("write failed: " + path);
}

CorrelativeGraph load_corr_graph(const std::string& path, int n_items) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  CorrelativeGraph g;
  g.adj.resize(n_items);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string context = path + ":" + std::to_string(line_no);
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string key;
      ss >> key >> g.k;
      continue;
    }
    std::istringstream ss(line);
    int item, nb;
    double sim;
    char tab1, tab2;
    if (!(ss >> item >> std::noskipws >> tab1 >> std::skipws >> nb >> std::noskipws >> tab2 >>
          std::skipws >> sim) ||
        tab1 != '\t' || tab2 != '\t') {
      throw ParseError(context + ": malformed edge line");
    }
    if (item < 0 || item >= n_items || nb < 0 || nb >= n_items) {
      throw ValidationError(context + ": item index out of range");
    }
    g.adj[item].emplace_back(nb, sim);
  }
  return g;
}

}  // namespace gnndsr
