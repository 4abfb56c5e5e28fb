#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "trustrec/corruptor.hpp"
#include "trustrec/errors.hpp"
#include "trustrec/rng.hpp"

using namespace trustrec;

namespace {

FeatureTable labelled(std::size_t n, std::size_t d, const std::string& name = "t") {
  FeatureTable t{name, Matrix<float>(n, d)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) t.rows(r, c) = static_cast<float>(100 * r + c);
  return t;
}

std::multiset<std::vector<float>> rows_of(const FeatureTable& t) {
  std::multiset<std::vector<float>> out;
  for (std::size_t r = 0; r < t.num_items(); ++r) out.emplace(t.rows.row(r).begin(), t.rows.row(r).end());
  return out;
}

InteractionSet grid_edges(std::size_t users, std::size_t items, std::size_t per_user) {
  std::vector<Edge> e;
  for (std::uint32_t u = 0; u < users; ++u)
    for (std::uint32_t k = 0; k < per_user; ++k) e.push_back({u, static_cast<std::uint32_t>((u + k) % items)});
  return InteractionSet(users, items, e);
}

}  // namespace

TEST_CASE("feature permutation with eta 0 is the identity") {
  const auto t = labelled(37, 3);
  const auto p = permute_modality(t, 0.0, 5);
  CHECK(p.table == t);
  CHECK(p.record.subset.empty());
  CHECK(p.record.changed_rows() == 0);
}

TEST_CASE("feature permutation with N=10 eta 0.05 selects nothing") {
  const auto t = labelled(10, 2);
  const auto p = permute_modality(t, 0.05, 3);
  CHECK(p.table == t);
  CHECK(p.record.subset.empty());
}

TEST_CASE("feature permutation N=10 eta 0.5 seed 7 replays from the seeded stream") {
  const auto t = labelled(10, 2);
  const auto p = permute_modality(t, 0.5, 7);
  // Replay: same named stream, five indices sampled then shuffled.
  auto rng = derive_stream("corrupt.features.t", 7);
  auto subset = sample_without_replacement(10, 5, rng);
  std::sort(subset.begin(), subset.end());
  auto source = subset;
  shuffle(std::span<std::uint32_t>(source), rng);
  CHECK(p.record.subset == subset);
  CHECK(p.record.source == source);
  for (std::size_t r = 0; r < 10; ++r) {
    const auto it = std::find(subset.begin(), subset.end(), r);
    const std::size_t from = it == subset.end() ? r : source[static_cast<std::size_t>(it - subset.begin())];
    CHECK(p.table.rows(r, 0) == t.rows(from, 0));
    CHECK(p.table.rows(r, 1) == t.rows(from, 1));
  }
}

TEST_CASE("feature permutation preserves the multiset of rows and touches only the subset") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto t = labelled(53, 4);
    const double eta = 0.05 * static_cast<double>(seed % 11);
    const auto p = permute_modality(t, eta, seed);
    CHECK(rows_of(p.table) == rows_of(t));
    CHECK(p.record.subset.size() == floor_count(eta, 53));
    std::vector<std::uint32_t> a = p.record.subset, b = p.record.source;
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    const std::set<std::uint32_t> in(a.begin(), a.end());
    for (std::uint32_t r = 0; r < 53; ++r)
      if (!in.count(r)) CHECK(std::equal(p.table.rows.row(r).begin(), p.table.rows.row(r).end(), t.rows.row(r).begin()));
  }
  CHECK_THROWS_AS(permute_modality(labelled(4, 1), 0.6, 1), ConfigError);
  CHECK_THROWS_AS(permute_modality(labelled(4, 1), -0.1, 1), ConfigError);
}

TEST_CASE("modalities are corrupted independently") {
  const auto t = labelled(200, 2, "t"), v = labelled(200, 2, "v");
  const auto pt = permute_modality(t, 0.3, 4), pv = permute_modality(v, 0.3, 4);
  CHECK(pt.record.subset != pv.record.subset);
  // The same modality with the same seed is reproducible.
  CHECK(permute_modality(t, 0.3, 4).record.source == pt.record.source);
}

TEST_CASE("truth tracking follows the permutation") {
  const auto t = labelled(40, 1);
  const auto p = permute_modality(t, 0.5, 9);
  std::vector<std::uint32_t> truth(40);
  for (std::uint32_t i = 0; i < 40; ++i) truth[i] = i;
  record_truth(p.record, truth);
  for (std::uint32_t i = 0; i < 40; ++i) CHECK(p.table.rows(truth[i], 0) == t.rows(i, 0));
  // A second corruption composes.
  const auto q = permute_modality(p.table, 0.5, 10);
  record_truth(q.record, truth);
  for (std::uint32_t i = 0; i < 40; ++i) CHECK(q.table.rows(truth[i], 0) == t.rows(i, 0));
}

TEST_CASE("edge corruption: eta 0 is the identity") {
  const auto g = grid_edges(10, 20, 10);
  const auto c = corrupt_edges(g, 0.0, 3);
  CHECK(c.edges == g);
  CHECK(c.added.empty());
  CHECK(c.removed.empty());
}

TEST_CASE("edge corruption: deletion and addition counts and set algebra") {
  const auto g = grid_edges(10, 20, 10);  // 100 edges
  REQUIRE(g.size() == 100);
  const auto del = corrupt_edges(g, -0.15, 1);
  CHECK(del.edges.size() == 85);
  CHECK(del.removed.size() == 15);
  for (const Edge& e : del.removed) {
    CHECK(g.contains(e));
    CHECK_FALSE(del.edges.contains(e));
  }
  for (const Edge& e : del.edges.edges()) CHECK(g.contains(e));

  const auto add = corrupt_edges(g, 0.15, 1);
  CHECK(add.edges.size() == 115);
  CHECK(add.added.size() == 15);
  std::set<Edge> diff;
  for (const Edge& e : add.edges.edges())
    if (!g.contains(e)) diff.insert(e);
  CHECK(diff == std::set<Edge>(add.added.begin(), add.added.end()));
  for (const Edge& e : g.edges()) CHECK(add.edges.contains(e));

  CHECK(corrupt_edges(g, 0.15, 1).edges == add.edges);
  CHECK_FALSE(corrupt_edges(g, 0.15, 2).edges == add.edges);
}

TEST_CASE("edge corruption: infeasible addition is a config error") {
  // 3 x 3 with 8 edges leaves one absent pair; 0.5 * 8 = 4 additions.
  std::vector<Edge> e;
  for (std::uint32_t u = 0; u < 3; ++u)
    for (std::uint32_t i = 0; i < 3; ++i)
      if (u != 2 || i != 2) e.push_back({u, i});
  const InteractionSet g(3, 3, e);
  CHECK_THROWS_AS(corrupt_edges(g, 0.5, 1), ConfigError);
  CHECK_THROWS_AS(corrupt_edges(g, 0.6, 1), ConfigError);
  // One addition fits exactly.
  const auto ok = corrupt_edges(g, 0.125, 1);
  CHECK(ok.edges.size() == 9);
}

TEST_CASE("audit files list every change") {
  const auto dir = std::filesystem::temp_directory_path() / "trustrec_test_corruptor";
  std::filesystem::create_directories(dir);
  const auto c = corrupt_edges(grid_edges(10, 20, 10), -0.1, 2);
  write_edge_audit(c, dir / "edges.tsv");
  std::ifstream in(dir / "edges.tsv");
  std::string line;
  std::size_t n = 0;
  std::getline(in, line);
  CHECK(line == "op\tuser\titem");
  while (std::getline(in, line)) n += line.rfind("-\t", 0) == 0;
  CHECK(n == 10);
}
