#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trustrec/corpus.hpp"

namespace trustrec {

// Which rows were shuffled and where each row's content came from:
// corrupted row `subset[k]` holds the input row `source[k]`.
struct PermRecord {
  std::string modality;
  std::vector<std::uint32_t> subset;  // ascending
  std::vector<std::uint32_t> source;  // a permutation of `subset`

  // Rows whose content actually changed (fixed points excluded).
  std::size_t changed_rows() const;
};

struct PermutedFeatures {
  FeatureTable table;
  PermRecord record;
};

// Samples floor(eta_m * N) items uniformly and applies a uniform random
// permutation of their rows. Fixed points are allowed.
PermutedFeatures permute_modality(const FeatureTable& features, double eta_m, std::uint64_t seed);

// After a permutation, item i's clean feature sits at row inverse[i].
void record_truth(const PermRecord& record, std::vector<std::uint32_t>& true_feature_rows);

struct EdgeCorruption {
  InteractionSet edges;
  std::vector<Edge> added;
  std::vector<Edge> removed;
};

// eta_e < 0 deletes floor(|eta_e| |E|) uniformly chosen edges; eta_e > 0 adds
// that many uniformly chosen pairs absent from `train` (holdout pairs are not
// excluded). Throws ConfigError when the additions cannot fit.
EdgeCorruption corrupt_edges(const InteractionSet& train, double eta_e, std::uint64_t seed);

void write_perm_audit(const PermRecord& record, const std::filesystem::path& path);
void write_edge_audit(const EdgeCorruption& corruption, const std::filesystem::path& path);

}  // namespace trustrec
