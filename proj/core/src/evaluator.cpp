#include "trustrec/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "trustrec/errors.hpp"
#include "trustrec/parallel.hpp"

namespace trustrec {

std::string_view to_string(FilterPolicy policy) {
  return policy == FilterPolicy::original_positives ? "original_positives" : "current_positives";
}

FilterPolicy parse_filter_policy(std::string_view name) {
  if (name == "original_positives") return FilterPolicy::original_positives;
  if (name == "current_positives") return FilterPolicy::current_positives;
  throw ConfigError("unknown filter policy '" + std::string(name) + "'");
}

namespace {

struct RankOrder {
  std::span<const double> scores;
  bool operator()(std::uint32_t a, std::uint32_t b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  }
};

std::vector<double> masked(std::span<const double> scores, std::span<const std::uint32_t> filtered) {
  std::vector<double> s(scores.begin(), scores.end());
  for (const auto i : filtered) s[i] = -std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace

std::vector<std::uint32_t> rank_items(std::span<const double> scores, std::span<const std::uint32_t> filtered) {
  const auto s = masked(scores, filtered);
  std::vector<std::uint32_t> order(s.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), RankOrder{s});
  return order;
}

std::vector<std::uint32_t> top_k_items(std::span<const double> scores, std::span<const std::uint32_t> filtered,
                                       std::size_t k) {
  const auto s = masked(scores, filtered);
  std::vector<std::uint32_t> candidates;
  candidates.reserve(s.size());
  std::size_t f = 0;
  for (std::uint32_t i = 0; i < s.size(); ++i) {
    while (f < filtered.size() && filtered[f] < i) ++f;
    if (f < filtered.size() && filtered[f] == i) continue;
    candidates.push_back(i);
  }
  k = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                    RankOrder{s});
  candidates.resize(k);
  return candidates;
}

double recall_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> truth, std::size_t k) {
  if (truth.empty()) throw std::invalid_argument("recall_at_k: empty truth set");
  const std::size_t n = std::min(k, ranked.size());
  std::size_t hits = 0;
  for (std::size_t p = 0; p < n; ++p) hits += std::binary_search(truth.begin(), truth.end(), ranked[p]);
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double ndcg_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> truth, std::size_t k) {
  if (truth.empty()) throw std::invalid_argument("ndcg_at_k: empty truth set");
  const std::size_t n = std::min(k, ranked.size());
  double dcg = 0.0;
  for (std::size_t p = 0; p < n; ++p)
    if (std::binary_search(truth.begin(), truth.end(), ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, truth.size());
  for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : at_k) j[std::to_string(k)] = {{"recall", v.recall}, {"ndcg", v.ndcg}};
  j["users"] = users;
  j["filter_policy"] = std::string(to_string(policy));
  j["ndcg_averaging"] = "all_test_users";
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  for (const auto& [key, value] : j.items()) {
    if (key == "users") {
      r.users = value.get<std::size_t>();
    } else if (key == "filter_policy") {
      r.policy = parse_filter_policy(value.get<std::string>());
    } else if (value.is_object() && value.contains("recall") && value.contains("ndcg")) {
      r.at_k[std::stoul(key)] = {value.at("recall").get<double>(), value.at("ndcg").get<double>()};
    }
  }
  return r;
}

MetricsReport evaluate_scorer(const UserScorer& scorer, std::size_t num_users, std::size_t num_items,
                              const InteractionSet& truth, const InteractionSet& filter,
                              std::span<const std::size_t> ks, FilterPolicy policy, std::size_t batch_users) {
  if (ks.empty()) throw ConfigError("evaluation needs at least one cutoff K");
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  const auto truth_by_user = truth.items_by_user();
  const auto filter_by_user = filter.items_by_user();

  // Per-user metric values, reduced afterwards in index order.
  std::vector<std::vector<MetricValues>> per_user(num_users);
  batch_users = std::max<std::size_t>(1, batch_users);
  for (std::size_t start = 0; start < num_users; start += batch_users) {
    const std::size_t stop = std::min(num_users, start + batch_users);
    parallel_for(stop - start, [&](std::size_t lo, std::size_t hi) {
      std::vector<double> scores(num_items);
      for (std::size_t off = lo; off < hi; ++off) {
        const auto u = static_cast<std::uint32_t>(start + off);
        if (truth_by_user[u].empty()) continue;
        scorer(u, scores);
        const auto top = top_k_items(scores, filter_by_user[u], max_k);
        auto& out = per_user[u];
        for (const auto k : ks) out.push_back({recall_at_k(top, truth_by_user[u], k), ndcg_at_k(top, truth_by_user[u], k)});
      }
    });
  }

  MetricsReport report;
  report.policy = policy;
  std::vector<MetricValues> sums(ks.size());
  for (std::size_t u = 0; u < num_users; ++u) {
    if (per_user[u].empty()) continue;
    ++report.users;
    for (std::size_t k = 0; k < ks.size(); ++k) {
      sums[k].recall += per_user[u][k].recall;
      sums[k].ndcg += per_user[u][k].ndcg;
    }
  }
  for (std::size_t k = 0; k < ks.size(); ++k) {
    const double n = report.users ? static_cast<double>(report.users) : 1.0;
    report.at_k[ks[k]] = {sums[k].recall / n, sums[k].ndcg / n};
  }
  return report;
}

template <typename Real>
UserScorer make_scorer(const EmbeddingModelT<Real>& model) {
  if (!model.propagated) throw std::logic_error("model must be propagated before scoring");
  return [&model](std::uint32_t u, std::span<double> out) { score_user(model, u, out); };
}

template <typename Real>
MetricsReport evaluate(const EmbeddingModelT<Real>& model, const SplitDataset& split, std::span<const std::size_t> ks,
                       FilterPolicy policy, const InteractionSet* current_supervision, std::size_t batch_users) {
  split.verify_filter_integrity();
  const InteractionSet* filter = &split.original_train_positives();
  if (policy == FilterPolicy::current_positives) {
    if (!current_supervision) throw ConfigError("current_positives policy needs the current supervision edges");
    filter = current_supervision;
  }
  return evaluate_scorer(make_scorer(model), split.num_users(), split.num_items(), split.test(), *filter, ks, policy,
                         batch_users);
}

template UserScorer make_scorer(const EmbeddingModelT<float>&);
template UserScorer make_scorer(const EmbeddingModelT<double>&);
template MetricsReport evaluate(const EmbeddingModelT<float>&, const SplitDataset&, std::span<const std::size_t>,
                                FilterPolicy, const InteractionSet*, std::size_t);
template MetricsReport evaluate(const EmbeddingModelT<double>&, const SplitDataset&, std::span<const std::size_t>,
                                FilterPolicy, const InteractionSet*, std::size_t);

}  // namespace trustrec
