#pragma once

#include <random>
#include <string>
#include <vector>

#include "gnndsr/data.hpp"

namespace gnndsr {

// Item-item graph linking each item to its top-k most similar items by
// cosine similarity over training rating columns. Directed as stored (top-k
// is asymmetric); zero-similarity pairs are never edges.
struct CorrelativeGraph {
  int k = 100;
  // adj[j]: (neighbor item, similarity), similarity descending, ties by
  // ascending item id.
  std::vector<std::vector<std::pair<int, double>>> adj;

  friend bool operator==(const CorrelativeGraph&, const CorrelativeGraph&) = default;
};

// Cosine of the two item columns; 0 when either column is empty.
double cosine_similarity(const SparseRatingMatrix& m, int j, int k);

CorrelativeGraph build_correlative_graph(const SparseRatingMatrix& m, int k = 100);

// Up to s entries of adj: all of them (in order) when |adj| <= s, otherwise
// a uniform sample without replacement.
std::vector<int> sample_neighbors(const std::vector<int>& adj, int s, std::mt19937_64& rng);

// Text edge list `item<TAB>neighbor<TAB>similarity` sorted by (item, rank).
void export_corr_graph(const CorrelativeGraph& g, const std::string& path);
CorrelativeGraph load_corr_graph(const std::string& path, int n_items);

}  // namespace gnndsr
