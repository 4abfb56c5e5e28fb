#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trustrec/backbone.hpp"
#include "trustrec/corpus.hpp"

namespace trustrec {

// Which training positives are removed from a user's candidate pool.
enum class FilterPolicy { original_positives, current_positives };

std::string_view to_string(FilterPolicy policy);
FilterPolicy parse_filter_policy(std::string_view name);

// Writes the scores of all items for one user into `out`.
using UserScorer = std::function<void(std::uint32_t user, std::span<double> out)>;

// Full order of items: filtered items last, otherwise by descending score
// with ties to the lower index. `filtered` must be sorted.
std::vector<std::uint32_t> rank_items(std::span<const double> scores, std::span<const std::uint32_t> filtered);

// The first k entries of rank_items (filtered items never appear).
std::vector<std::uint32_t> top_k_items(std::span<const double> scores, std::span<const std::uint32_t> filtered,
                                       std::size_t k);

// `truth` must be sorted and non-empty.
double recall_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> truth, std::size_t k);
double ndcg_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> truth, std::size_t k);

struct MetricValues {
  double recall = 0.0;
  double ndcg = 0.0;
  friend bool operator==(const MetricValues&, const MetricValues&) = default;
};

struct MetricsReport {
  std::map<std::size_t, MetricValues> at_k;
  std::size_t users = 0;
  FilterPolicy policy = FilterPolicy::original_positives;

  // {"10": {"recall": .., "ndcg": ..}, ..., "users": n, "filter_policy": ..}
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Averages Recall@K / NDCG@K over users with at least one `truth` item,
// removing each user's `filter` items from the candidates. Users are scored
// in batches of `batch_users`; the reduction runs in user-index order.
MetricsReport evaluate_scorer(const UserScorer& scorer, std::size_t num_users, std::size_t num_items,
                              const InteractionSet& truth, const InteractionSet& filter,
                              std::span<const std::size_t> ks, FilterPolicy policy,
                              std::size_t batch_users = 4096);

template <typename Real>
UserScorer make_scorer(const EmbeddingModelT<Real>& model);

// Test-set evaluation. original_positives filters with the split's frozen
// train positives; current_positives filters with `current_supervision`.
template <typename Real>
MetricsReport evaluate(const EmbeddingModelT<Real>& model, const SplitDataset& split, std::span<const std::size_t> ks,
                       FilterPolicy policy = FilterPolicy::original_positives,
                       const InteractionSet* current_supervision = nullptr, std::size_t batch_users = 4096);

}  // namespace trustrec
