#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gnndsr/errors.hpp"

namespace gnndsr {

enum class Split { train, val, test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

// One (user, item, rating, timestamp) interaction with its split label.
struct InteractionRecord {
  int user = 0;
  int item = 0;
  int rating = 0;
  std::int64_t timestamp = 0;
  Split split = Split::train;

  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

// Sequence entry: the counterpart entity (item for user sequences, user for
// item sequences), the rating, and the time of the interaction.
struct Event {
  int counterpart = 0;
  int rating = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

// Indexed corpus. Immutable after construction; safe for concurrent reads.
// Sequences hold training events only, sorted by (timestamp, counterpart,
// rating); truncation to the most recent events happens at batch assembly.
struct Dataset {
  int n_users = 0;
  int n_items = 0;
  std::vector<int> rating_scale;  // sorted distinct values
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::vector<InteractionRecord> interactions;  // canonical chronological order
  std::vector<std::vector<int>> social_adj;     // symmetric, sorted
  std::vector<std::vector<Event>> user_seqs;
  std::vector<std::vector<Event>> item_seqs;
  std::vector<std::string> user_ids;  // dense index -> raw id
  std::vector<std::string> item_ids;

  int rating_index(int rating) const;
  int rating_min() const;
  int rating_max() const;
  std::size_t social_link_count() const;  // undirected edges

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Column-major training-only rating matrix: cols[j] holds (user, rating)
// sorted by user, deduplicated so the latest-timestamp rating wins.
struct SparseRatingMatrix {
  std::vector<std::vector<std::pair<int, double>>> cols;

  friend bool operator==(const SparseRatingMatrix&, const SparseRatingMatrix&) = default;
};

struct ParsedInteractions {
  std::vector<InteractionRecord> records;  // file order, split unset
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, int> user_index;
  std::unordered_map<std::string, int> item_index;
};

struct IngestOptions {
  std::vector<int> rating_scale{1, 2, 3, 4, 5};
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  // Drop users without a social link, as the source datasets do. Off for
  // corpora constructed without a social graph.
  bool require_social = true;
};

// Tab-separated `user<TAB>item<TAB>rating<TAB>timestamp` lines; `#` comments
// ignored. Raw ids become dense indices in first-seen order.
ParsedInteractions parse_interactions(const std::string& path, const std::vector<int>& rating_scale);

// Tab-separated `user<TAB>user` lines over raw ids. Unknown users are an
// error; self-loops and duplicates are dropped.
std::vector<std::pair<int, int>> parse_social_edges(const std::string& path,
                                                    const std::unordered_map<std::string, int>& user_index);
std::vector<std::vector<int>> symmetrize_edges(const std::vector<std::pair<int, int>>& edges, int n_users);
std::vector<std::vector<int>> parse_social(const std::string& path,
                                           const std::unordered_map<std::string, int>& user_index,
                                           int n_users);

// Sorts records by (timestamp, user, item, rating) and labels the first
// floor(N*r0) train, up to floor(N*(r0+r1)) val, the rest test.
void chronological_split(std::vector<InteractionRecord>& records, const std::array<double, 3>& ratios);

void build_sequences(Dataset& ds);
SparseRatingMatrix build_rating_matrix(const Dataset& ds);

// Assembles a Dataset from already-indexed records and social edges:
// iteratively removes users without a training interaction (or, when
// required, without a social link) and items without a training interaction,
// re-splitting until stable, then compacts indices.
Dataset make_dataset_from_records(std::vector<InteractionRecord> records,
                                  std::vector<std::pair<int, int>> social_edges,
                                  std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                                  const IngestOptions& options);

Dataset build_dataset(const std::string& interactions_path, const std::string& social_path,
                      const IngestOptions& options);

// Processed-dataset directory: meta, interactions.tsv (split column
// appended), social.tsv, users.map, items.map.
void export_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Events strictly before tau in canonical order, truncated to the most
// recent max_len (no truncation when max_len <= 0).
std::vector<Event> events_before(const std::vector<Event>& seq, std::int64_t tau, int max_len);

std::vector<InteractionRecord> split_records(const Dataset& ds, Split split);

}  // namespace gnndsr
