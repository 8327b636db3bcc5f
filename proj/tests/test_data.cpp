#include "gnndsr/data.hpp"

#include <algorithm>

#include "doctest.h"
#include "gnndsr/rng.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace gnndsr;
using testsup::TempDir;

TEST_CASE("parse_interactions maps raw ids in first-seen order") {
  TempDir dir("parse");
  auto path = dir.write("i.tsv", "u1\ti1\t5\t100\n");
  auto parsed = parse_interactions(path, {1, 2, 3, 4, 5});
  REQUIRE(parsed.records.size() == 1);
  CHECK(parsed.records[0] == InteractionRecord{0, 0, 5, 100, Split::train});
  CHECK(parsed.user_ids == std::vector<std::string>{"u1"});
  CHECK(parsed.item_ids == std::vector<std::string>{"i1"});

  auto path2 = dir.write("i2.tsv", "# comment\nb\tx\t3\t10\na\tx\t4\t20\nb\ty\t5\t30\n");
  auto parsed2 = parse_interactions(path2, {1, 2, 3, 4, 5});
  CHECK(parsed2.user_ids == std::vector<std::string>{"b", "a"});
  CHECK(parsed2.item_ids == std::vector<std::string>{"x", "y"});
  CHECK(parsed2.records[1].user == 1);
  CHECK(parsed2.records[2].item == 1);
}

TEST_CASE("parse_interactions handles degenerate and malformed input") {
  TempDir dir("parse-bad");
  CHECK(parse_interactions(dir.write("empty.tsv", ""), {1}).records.empty());

  auto bad = dir.write("bad.tsv", "u1\ti1\t5\t100\nu1\ti1\t5\n");
  CHECK_THROWS_WITH_AS(parse_interactions(bad, {1, 2, 3, 4, 5}), doctest::Contains(":2"),
                       ParseError);

  auto scale = dir.write("scale.tsv", "u1\ti1\t9\t100\n");
  CHECK_THROWS_AS(parse_interactions(scale, {1, 2, 3, 4, 5}), ValidationError);

  auto garbage = dir.write("garbage.tsv", "u1\ti1\tfive\t100\n");
  CHECK_THROWS_AS(parse_interactions(garbage, {1, 2, 3, 4, 5}), ParseError);

  CHECK_THROWS_AS(parse_interactions(dir.file("missing.tsv"), {1}), IoError);
}

TEST_CASE("duplicate pair: matrix keeps latest rating, sequences keep both events") {
  TempDir dir("dedup");
  auto path = dir.write("i.tsv", "u0\ti0\t3\t100\nu0\ti0\t5\t200\nu1\ti1\t4\t300\n");
  auto parsed = parse_interactions(path, {1, 2, 3, 4, 5});
  IngestOptions opt;
  opt.ratios = {1.0, 0.0, 0.0};
  opt.require_social = false;
  Dataset ds = make_dataset_from_records(parsed.records, {}, parsed.user_ids, parsed.item_ids, opt);
  SparseRatingMatrix m = build_rating_matrix(ds);
  REQUIRE(m.cols[0].size() == 1);
  CHECK(m.cols[0][0] == std::pair<int, double>{0, 5.0});
  REQUIRE(ds.user_seqs[0].size() == 2);
  CHECK(ds.user_seqs[0][0].rating == 3);
  CHECK(ds.user_seqs[0][1].rating == 5);
}

TEST_CASE("parse_social symmetrizes, drops self-loops and duplicates") {
  TempDir dir("social");
  std::unordered_map<std::string, int> users{{"a", 0}, {"b", 1}, {"c", 2}};

  auto adj = parse_social(dir.write("s1.tsv", "a\tb\n"), users, 3);
  CHECK(adj[0] == std::vector<int>{1});
  CHECK(adj[1] == std::vector<int>{0});

  adj = parse_social(dir.write("s2.tsv", "a\ta\n"), users, 3);
  CHECK(adj[0].empty());

  adj = parse_social(dir.write("s3.tsv", "a\tb\nb\ta\nb\tc\n"), users, 3);
  CHECK(adj[1] == std::vector<int>{0, 2});

  CHECK_THROWS_AS(parse_social(dir.write("s4.tsv", "a\tz\n"), users, 3), ValidationError);
}

TEST_CASE("social adjacency is a symmetric relation") {
  Dataset ds = testsup::random_rating_dataset(12, 8, 120, 7, 0.3);
  for (int u = 0; u < ds.n_users; ++u) {
    for (int v : ds.social_adj[u]) {
      const auto& back = ds.social_adj[v];
      CHECK(std::binary_search(back.begin(), back.end(), u));
    }
  }
}

namespace {

std::vector<InteractionRecord> ladder_records(int n, std::int64_t ts_step = 1) {
  std::vector<InteractionRecord> recs;
  for (int i = 0; i < n; ++i) {
    recs.push_back({i % 3, i % 2, 1 + i % 5, (i + 1) * ts_step, Split::train});
  }
  return recs;
}

}  // namespace

TEST_CASE("chronological split boundaries") {
  std::vector<InteractionRecord> recs;
  for (int i = 10; i >= 1; --i) recs.push_back({0, i, 1, i, Split::train});
  chronological_split(recs, {0.8, 0.1, 0.1});
  for (int i = 0; i < 10; ++i) {
    CHECK(recs[i].timestamp == i + 1);  // sorted
    const Split expect = i < 8 ? Split::train : i < 9 ? Split::val : Split::test;
    CHECK(recs[i].split == expect);
  }

  auto seven = ladder_records(7);
  chronological_split(seven, {0.8, 0.1, 0.1});
  int counts[3] = {0, 0, 0};
  for (const auto& r : seven) counts[static_cast<int>(r.split)]++;
  CHECK(counts[0] == 5);
  CHECK(counts[1] == 1);
  CHECK(counts[2] == 1);
}

TEST_CASE("split is deterministic under equal timestamps") {
  std::vector<InteractionRecord> recs;
  for (int i = 0; i < 12; ++i) recs.push_back({11 - i, i % 4, 1, 50, Split::train});
  auto a = recs, b = recs;
  std::reverse(b.begin(), b.end());
  chronological_split(a, {0.8, 0.1, 0.1});
  chronological_split(b, {0.8, 0.1, 0.1});
  CHECK(a == b);
  // Ties broken by ascending (user, item).
  CHECK(a.front().user == 0);
  CHECK(a.back().user == 11);
}

TEST_CASE("split validates inputs") {
  auto two = ladder_records(2);
  CHECK_THROWS_AS(chronological_split(two, {0.8, 0.1, 0.1}), ValidationError);
  auto ten = ladder_records(10);
  CHECK_THROWS_AS(chronological_split(ten, {0.8, 0.1, 0.2}), ValidationError);
  CHECK_THROWS_AS(chronological_split(ten, {1.2, -0.1, -0.1}), ValidationError);
}

TEST_CASE("sequences are sorted by time") {
  Dataset ds = testsup::dataset_from_records(
      {{0, 0, 1, 3, Split::train}, {0, 1, 2, 1, Split::train}, {0, 2, 3, 2, Split::train}}, {}, 1,
      3, {.rating_scale = {1, 2, 3, 4, 5}, .ratios = {1, 0, 0}});
  REQUIRE(ds.user_seqs[0].size() == 3);
  CHECK(ds.user_seqs[0][0].timestamp == 1);
  CHECK(ds.user_seqs[0][1].timestamp == 2);
  CHECK(ds.user_seqs[0][2].timestamp == 3);
}

TEST_CASE("events_before filters strictly and keeps the suffix") {
  std::vector<Event> seq{{0, 1, 1}, {1, 1, 5}, {2, 1, 9}};
  auto consumable = events_before(seq, 5, 30);
  REQUIRE(consumable.size() == 1);
  CHECK(consumable[0].timestamp == 1);

  std::vector<Event> long_seq;
  for (int i = 0; i < 35; ++i) long_seq.push_back({i, 1, i + 1});
  auto truncated = events_before(long_seq, 1000, 30);
  REQUIRE(truncated.size() == 30);
  CHECK(truncated.front().timestamp == 6);  // five oldest dropped
  CHECK(truncated.back().timestamp == 35);

  // Shuffled storage yields the same canonical result.
  std::vector<Event> shuffled = long_seq;
  std::mt19937_64 rng(3);
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    std::swap(shuffled[i - 1], shuffled[uniform_index(rng, i)]);
  }
  CHECK(events_before(shuffled, 1000, 30) == truncated);
}

TEST_CASE("rating matrix uses training rows only") {
  std::vector<InteractionRecord> recs;
  // Ten events; the last two (latest timestamps) land in val/test.
  for (int i = 0; i < 10; ++i) recs.push_back({i % 2, i % 2, 1 + i % 5, i + 1, Split::train});
  Dataset ds = testsup::dataset_from_records(recs, {}, 2, 2);
  SparseRatingMatrix m = build_rating_matrix(ds);
  int train_count = 0;
  for (const auto& rec : ds.interactions) {
    if (rec.split != Split::train) {
      for (const auto& [u, r] : m.cols[rec.item]) {
        CHECK((u != rec.user || r != rec.rating));
      }
    } else {
      ++train_count;
    }
  }
  CHECK(train_count == 8);

  // Empty column and singleton column.
  Dataset tiny = testsup::dataset_from_records(
      {{0, 0, 4, 1, Split::train}, {0, 0, 4, 2, Split::train}, {1, 0, 2, 3, Split::train}}, {}, 2,
      2, {.rating_scale = {1, 2, 3, 4, 5}, .ratios = {1, 0, 0}});
  (void)tiny;
  Dataset manual;
  manual.n_users = 2;
  manual.n_items = 2;
  manual.rating_scale = {1, 2, 3, 4, 5};
  manual.interactions = {{0, 0, 4, 1, Split::train}};
  SparseRatingMatrix mm = build_rating_matrix(manual);
  CHECK(mm.cols[0] == std::vector<std::pair<int, double>>{{0, 4.0}});
  CHECK(mm.cols[1].empty());
}

TEST_CASE("dataset filter removes stranded users and items to a fixpoint") {
  // User 2's only event has the latest timestamp, so it falls in the test
  // split and user 2 ends up with no training interaction.
  std::vector<InteractionRecord> recs;
  for (int i = 0; i < 9; ++i) recs.push_back({i % 2, i % 3, 1, i + 1, Split::train});
  recs.push_back({2, 3, 1, 100, Split::train});
  IngestOptions opt;
  opt.rating_scale = {1};
  opt.require_social = true;
  std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}};
  Dataset ds = make_dataset_from_records(recs, edges, testsup::make_ids(3, "u"),
                                         testsup::make_ids(4, "i"), opt);
  CHECK(ds.n_users == 2);
  CHECK(ds.n_items == 3);  // item 3 was only touched by user 2
  // Invariants: every user has a training interaction and a social link;
  // every item has a training interaction.
  std::vector<int> user_train(ds.n_users, 0), item_train(ds.n_items, 0);
  for (const auto& rec : ds.interactions) {
    if (rec.split == Split::train) {
      user_train[rec.user]++;
      item_train[rec.item]++;
    }
  }
  for (int u = 0; u < ds.n_users; ++u) {
    CHECK(user_train[u] >= 1);
    CHECK(!ds.social_adj[u].empty());
  }
  for (int v = 0; v < ds.n_items; ++v) CHECK(item_train[v] >= 1);
}

TEST_CASE("dataset filter removes socially isolated users when required") {
  std::vector<InteractionRecord> recs;
  for (int i = 0; i < 12; ++i) recs.push_back({i % 3, i % 2, 1, i + 1, Split::train});
  IngestOptions opt;
  opt.rating_scale = {1};
  opt.require_social = true;
  // User 2 has interactions but no social edge.
  Dataset ds = make_dataset_from_records(recs, {{0, 1}}, testsup::make_ids(3, "u"),
                                         testsup::make_ids(2, "i"), opt);
  CHECK(ds.n_users == 2);
  CHECK(ds.user_ids == std::vector<std::string>{"u0", "u1"});
}

TEST_CASE("export then load round-trips the dataset") {
  Dataset ds = testsup::random_rating_dataset(10, 14, 80, 99, 0.25);
  TempDir dir("roundtrip");
  export_dataset(ds, dir.file("out"));
  Dataset back = load_dataset(dir.file("out"));
  CHECK(back == ds);
}

TEST_CASE("rating_index maps scale values") {
  Dataset ds;
  ds.rating_scale = {1, 2, 3, 4, 5};
  CHECK(ds.rating_index(1) == 0);
  CHECK(ds.rating_index(5) == 4);
  CHECK_THROWS_AS(ds.rating_index(7), LookupError);
  CHECK(ds.rating_min() == 1);
  CHECK(ds.rating_max() == 5);
}
