#include "trustrec/corruptor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "trustrec/errors.hpp"
#include "trustrec/rng.hpp"

namespace trustrec {

std::size_t PermRecord::changed_rows() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < subset.size(); ++k) n += subset[k] != source[k];
  return n;
}

PermutedFeatures permute_modality(const FeatureTable& features, double eta_m, std::uint64_t seed) {
  if (!(eta_m >= 0.0 && eta_m <= 0.5)) throw ConfigError("eta_m must lie in [0, 0.5]");
  const std::size_t n = features.num_items();
  auto rng = derive_stream("corrupt.features." + features.modality, seed);
  PermutedFeatures out{features, PermRecord{features.modality, {}, {}}};
  const std::size_t count = floor_count(eta_m, n);
  if (count == 0) return out;

  auto subset = sample_without_replacement(n, count, rng);
  std::sort(subset.begin(), subset.end());
  auto source = subset;
  shuffle(std::span<std::uint32_t>(source), rng);
  for (std::size_t k = 0; k < subset.size(); ++k) {
    const auto src = features.rows.row(source[k]);
    std::copy(src.begin(), src.end(), out.table.rows.row(subset[k]).begin());
  }
  out.record.subset = std::move(subset);
  out.record.source = std::move(source);
  return out;
}

void record_truth(const PermRecord& record, std::vector<std::uint32_t>& true_feature_rows) {
  // Row subset[k] now holds what used to be at row source[k]; the item whose
  // feature was at row source[k] therefore finds it at row subset[k].
  const auto before = true_feature_rows;
  std::vector<std::uint32_t> item_at_row(before.size());
  for (std::uint32_t item = 0; item < before.size(); ++item) item_at_row[before[item]] = item;
  for (std::size_t k = 0; k < record.subset.size(); ++k)
    true_feature_rows[item_at_row[record.source[k]]] = record.subset[k];
}

EdgeCorruption corrupt_edges(const InteractionSet& train, double eta_e, std::uint64_t seed) {
  if (!(std::abs(eta_e) <= 0.5)) throw ConfigError("eta_e must lie in [-0.5, 0.5]");
  EdgeCorruption out{train, {}, {}};
  const std::size_t count = floor_count(std::abs(eta_e), train.size());
  if (count == 0) return out;
  auto rng = derive_stream("corrupt.edges", seed);

  if (eta_e < 0) {
    const auto picks = sample_without_replacement(train.size(), count, rng);
    for (const auto k : picks) out.removed.push_back(train.edges()[k]);
    std::sort(out.removed.begin(), out.removed.end());
    out.edges = set_difference(train, out.removed);
    return out;
  }

  const std::uint64_t M = train.num_users(), N = train.num_items();
  if (M * N - train.size() < count)
    throw ConfigError("cannot add " + std::to_string(count) + " noise edges: only " +
                      std::to_string(M * N - train.size()) + " absent pairs remain");
  std::unordered_set<std::uint64_t> taken;
  while (out.added.size() < count) {
    const auto u = static_cast<std::uint32_t>(rng.below(M));
    const auto i = static_cast<std::uint32_t>(rng.below(N));
    if (train.contains(u, i)) continue;
    if (!taken.insert(static_cast<std::uint64_t>(u) * N + i).second) continue;
    out.added.push_back({u, i});
  }
  std::sort(out.added.begin(), out.added.end());
  out.edges = set_union(train, out.added);
  return out;
}

void write_perm_audit(const PermRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# modality=" << record.modality << " corrupted=" << record.subset.size()
      << " changed=" << record.changed_rows() << '\n';
  out << "item\tsource_row\n";
  for (std::size_t k = 0; k < record.subset.size(); ++k) out << record.subset[k] << '\t' << record.source[k] << '\n';
}

void write_edge_audit(const EdgeCorruption& corruption, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "op\tuser\titem\n";
  for (const Edge& e : corruption.removed) out << "-\t" << e.user << '\t' << e.item << '\n';
  for (const Edge& e : corruption.added) out << "+\t" << e.user << '\t' << e.item << '\n';
}

}  // namespace trustrec
