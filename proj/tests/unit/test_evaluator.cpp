#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "oracles/metric_check.hpp"
#include "trustrec/errors.hpp"
#include "trustrec/evaluator.hpp"

using namespace trustrec;

TEST_CASE("ranking: descending score, ties to lower index, filtered items last") {
  const std::vector<double> s{0.5, 0.9, 0.5, 0.1, 0.9};
  const std::vector<std::uint32_t> none;
  CHECK(rank_items(s, none) == std::vector<std::uint32_t>{1, 4, 0, 2, 3});
  const std::vector<std::uint32_t> filt{1, 2};
  const auto r = rank_items(s, filt);
  CHECK(std::vector<std::uint32_t>(r.begin(), r.begin() + 3) == std::vector<std::uint32_t>{4, 0, 3});
  CHECK(top_k_items(s, filt, 2) == std::vector<std::uint32_t>{4, 0});
  CHECK(top_k_items(s, filt, 10) == std::vector<std::uint32_t>{4, 0, 3});
}

TEST_CASE("metric closed forms") {
  const std::vector<std::uint32_t> ranked{7, 3, 5, 1, 0, 2, 4, 6, 8, 9};
  const std::vector<std::uint32_t> first{7}, third{5};
  CHECK(ndcg_at_k(ranked, first, 10) == 1.0);
  CHECK(recall_at_k(ranked, first, 1) == 1.0);
  CHECK(ndcg_at_k(ranked, third, 10) == 0.5);
  CHECK(recall_at_k(ranked, third, 2) == 0.0);
  CHECK(ndcg_at_k(ranked, third, 2) == 0.0);

  // Two hits at ranks 1 and 2 out of four relevant: recall 0.5, ndcg 1 at K=2.
  const std::vector<std::uint32_t> four{3, 7, 8, 9};
  CHECK(recall_at_k(ranked, four, 2) == 0.5);
  CHECK(ndcg_at_k(ranked, four, 2) == doctest::Approx(1.0));
  const double idcg4 = 1 + 1 / std::log2(3.0) + 0.5 + 1 / std::log2(5.0);
  const double dcg = 1 + 1 / std::log2(3.0) + 1 / std::log2(10.0) + 1 / std::log2(11.0);
  CHECK(ndcg_at_k(ranked, four, 10) == doctest::Approx(dcg / idcg4));
  const std::vector<std::uint32_t> empty;
  CHECK_THROWS_AS(recall_at_k(ranked, empty, 10), std::invalid_argument);
}

TEST_CASE("evaluator equals brute force on 1000 random instances") {
  const auto tally = metric_check::run(1000, 2024);
  CHECK(tally.instances == 1000);
  CHECK(tally.max_items <= 50);
  CHECK(tally.mismatches == 0);
}

TEST_CASE("recall is monotone in K and metrics stay in [0, 1]") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> ud;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> s(40);
    for (auto& x : s) x = ud(gen);
    std::set<std::uint32_t> t;
    while (t.size() < 6) t.insert(static_cast<std::uint32_t>(gen() % 40));
    const std::vector<std::uint32_t> truth(t.begin(), t.end()), none;
    const auto r = rank_items(s, none);
    double prev = 0;
    for (std::size_t k = 1; k <= 40; ++k) {
      const double rec = recall_at_k(r, truth, k), nd = ndcg_at_k(r, truth, k);
      CHECK(rec >= prev);
      CHECK(rec <= 1.0);
      CHECK(nd >= 0.0);
      CHECK(nd <= 1.0 + 1e-12);
      prev = rec;
    }
    CHECK(prev == 1.0);
  }
}

TEST_CASE("filtered items never appear in the top K") {
  std::mt19937_64 gen(8);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> s(30);
    for (auto& x : s) x = static_cast<double>(gen() % 5);
    std::set<std::uint32_t> f;
    for (int k = 0; k < 10; ++k) f.insert(static_cast<std::uint32_t>(gen() % 30));
    const std::vector<std::uint32_t> filt(f.begin(), f.end());
    for (const auto i : top_k_items(s, filt, 20)) CHECK_FALSE(f.count(i));
    CHECK(top_k_items(s, filt, 30).size() == 30 - f.size());
  }
}

TEST_CASE("user batching does not change the result") {
  const std::size_t M = 37, N = 25;
  std::mt19937_64 gen(3);
  std::vector<Edge> truth, filter;
  for (std::uint32_t u = 0; u < M; ++u)
    for (std::uint32_t i = 0; i < N; ++i) {
      const auto r = gen() % 8;
      if (r == 0) truth.push_back({u, i});
      else if (r == 1) filter.push_back({u, i});
    }
  const InteractionSet ts(M, N, truth), fs(M, N, filter);
  const UserScorer sc = [](std::uint32_t u, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(1.0 + u * 0.7 + i * 1.3);
  };
  const std::size_t ks[] = {5, 10};
  const auto a = evaluate_scorer(sc, M, N, ts, fs, ks, FilterPolicy::original_positives, 1);
  const auto b = evaluate_scorer(sc, M, N, ts, fs, ks, FilterPolicy::original_positives, 4096);
  CHECK(a == b);
  const std::size_t none[] = {0};
  CHECK_THROWS_AS(evaluate_scorer(sc, M, N, ts, fs, std::span<const std::size_t>(none, 0),
                                  FilterPolicy::original_positives),
                  ConfigError);
}

TEST_CASE("metrics report JSON round trip and policy names") {
  MetricsReport r;
  r.at_k[10] = {0.25, 0.125};
  r.at_k[20] = {0.5, 0.3};
  r.users = 12;
  r.policy = FilterPolicy::current_positives;
  CHECK(MetricsReport::from_json(r.to_json()) == r);
  CHECK(parse_filter_policy("original_positives") == FilterPolicy::original_positives);
  CHECK_THROWS_AS(parse_filter_policy("train"), ConfigError);
}

TEST_CASE("train-only pruning: current_positives moves, original_positives candidates do not") {
  // One user, items 0..5. Train positives {0, 1}; test {3}. The scorer ranks
  // item 0 first, then 1, 2, 3.
  const InteractionSet train(1, 6, {{0, 0}, {0, 1}});
  const InteractionSet val(1, 6, {});
  const InteractionSet test(1, 6, {{0, 3}});
  const SplitDataset split(train, val, test);
  const UserScorer sc = [](std::uint32_t, std::span<double> out) {
    const double s[] = {10, 9, 8, 7, 1, 0};
    std::copy(std::begin(s), std::end(s), out.begin());
  };
  const InteractionSet pruned(1, 6, {{0, 1}});  // (0, 0) removed from supervision only
  const std::size_t ks[] = {2};

  const auto orig_before = evaluate_scorer(sc, 1, 6, test, split.original_train_positives(), ks,
                                           FilterPolicy::original_positives);
  const auto orig_after = evaluate_scorer(sc, 1, 6, test, split.original_train_positives(), ks,
                                          FilterPolicy::original_positives);
  const auto cur_before = evaluate_scorer(sc, 1, 6, test, train, ks, FilterPolicy::current_positives);
  const auto cur_after = evaluate_scorer(sc, 1, 6, test, pruned, ks, FilterPolicy::current_positives);

  // Candidate sets: original filter is untouched by the prune.
  std::vector<double> scores(6);
  sc(0, scores);
  const auto orig_items = split.original_train_positives().items_by_user()[0];
  const auto cur_items = pruned.items_by_user()[0];
  CHECK(top_k_items(scores, orig_items, 6) == std::vector<std::uint32_t>{2, 3, 4, 5});
  CHECK(top_k_items(scores, cur_items, 6) == std::vector<std::uint32_t>{0, 2, 3, 4, 5});
  CHECK(orig_before == orig_after);
  CHECK(orig_after.at_k.at(2).recall == 1.0);
  CHECK(cur_before.at_k.at(2).recall == 1.0);
  CHECK(cur_after.at_k.at(2).recall == 0.0);
  CHECK_NOTHROW(split.verify_filter_integrity());
}
