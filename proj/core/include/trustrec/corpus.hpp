#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "trustrec/matrix.hpp"

namespace trustrec {

struct Edge {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// The positive set of a binary user-item matrix. Edges are kept sorted by
// (user, item) and unique; construction validates index ranges.
class InteractionSet {
 public:
  InteractionSet() = default;
  InteractionSet(std::size_t num_users, std::size_t num_items, std::vector<Edge> edges);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t size() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }
  std::span<const Edge> edges() const { return edges_; }

  bool contains(Edge e) const;
  bool contains(std::uint32_t u, std::uint32_t i) const { return contains(Edge{u, i}); }

  // Items of user u, ascending.
  std::vector<std::vector<std::uint32_t>> items_by_user() const;
  std::vector<std::size_t> user_degrees() const;
  std::vector<std::size_t> item_degrees() const;

  // Order-sensitive 64-bit digest of the edge list.
  std::uint64_t fingerprint() const;

  friend bool operator==(const InteractionSet&, const InteractionSet&) = default;

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<Edge> edges_;
};

// Set algebra over edge sets sharing M and N.
InteractionSet set_union(const InteractionSet& a, std::span<const Edge> extra);
InteractionSet set_difference(const InteractionSet& a, std::span<const Edge> removed);

// Train/val/test partition plus a frozen copy of the train positives used as
// the evaluation filter. The frozen copy is only reachable through a const
// accessor and its fingerprint is checked by the evaluator.
class SplitDataset {
 public:
  SplitDataset(InteractionSet train, InteractionSet val, InteractionSet test);

  std::size_t num_users() const { return train_.num_users(); }
  std::size_t num_items() const { return train_.num_items(); }
  const InteractionSet& train() const { return train_; }
  const InteractionSet& val() const { return val_; }
  const InteractionSet& test() const { return test_; }
  const InteractionSet& original_train_positives() const { return *original_train_; }

  // Throws std::logic_error if the frozen train positives changed.
  void verify_filter_integrity() const;

 private:
  InteractionSet train_;
  InteractionSet val_;
  InteractionSet test_;
  std::shared_ptr<const InteractionSet> original_train_;
  std::uint64_t original_fingerprint_ = 0;
};

// Per-item dense modality features, row i belongs to item i.
struct FeatureTable {
  std::string modality;
  Matrix<float> rows;

  std::size_t num_items() const { return rows.rows(); }
  std::size_t dim() const { return rows.cols(); }
  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

struct IngestResult {
  InteractionSet interactions;
  std::vector<std::string> user_ids;  // index -> raw id
  std::vector<std::string> item_ids;
};

// Reads "raw_user<TAB>raw_item" lines, applies iterative k-core filtering on
// users and items, and assigns dense indices in first-appearance order.
IngestResult ingest_interactions(const std::filesystem::path& path, std::size_t min_core);

// Writes "<prefix>.users.tsv" and "<prefix>.items.tsv" (raw_id<TAB>index).
void write_id_maps(const IngestResult& result, const std::string& prefix);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Per-user seeded shuffle then floor-based val/test counts; train takes the
// remainder. Users with fewer than 3 edges keep everything in train.
SplitDataset split_dataset(const InteractionSet& interactions, SplitRatios ratios, std::uint64_t seed);

// Edge list files: "user<TAB>item" dense indices, one edge per line.
void write_edges(const InteractionSet& edges, const std::filesystem::path& path);
InteractionSet read_edges(const std::filesystem::path& path, std::size_t num_users, std::size_t num_items);

// Split directory: meta.tsv (users/items counts), train.tsv, val.tsv, test.tsv.
void write_split(const SplitDataset& split, const std::filesystem::path& dir);
SplitDataset read_split(const std::filesystem::path& dir);

// MMF1 binary features: "MMF1 <N> <d>\n" then N*d little-endian float32.
// When expected_items is non-zero the header N must match it.
FeatureTable load_features(const std::filesystem::path& path, const std::string& modality,
                           std::size_t expected_items = 0);
void save_features(const FeatureTable& table, const std::filesystem::path& path);

// CSV variant: header "item_index,f0,...,f{d-1}".
FeatureTable load_features_csv(const std::filesystem::path& path, const std::string& modality,
                               std::size_t expected_items = 0);
void save_features_csv(const FeatureTable& table, const std::filesystem::path& path);

// Streams used by the checkpoint writer and the MMF1 file functions.
void write_mmf1_block(std::ostream& out, const Matrix<float>& m);
Matrix<float> read_mmf1_block(std::istream& in, const std::string& source);

struct SynthSpec {
  std::size_t num_users = 800;
  std::size_t num_items = 500;
  std::size_t latent_dim = 16;
  std::size_t edges_per_user = 20;
  double feature_noise_std = 0.1;
  std::map<std::string, std::size_t> modality_dims{{"t", 32}, {"v", 64}};
};

struct SynthTruth {
  Matrix<double> item_latent;
  Matrix<double> user_latent;
  // clean_features[k] matches features[k] of the generated data.
  std::vector<FeatureTable> clean_features;
  // Per modality: item -> row of the (possibly corrupted) table holding its
  // clean feature. Identity until a corruption is recorded.
  std::vector<std::vector<std::uint32_t>> true_feature_rows;
};

struct SynthData {
  SplitDataset split;
  std::vector<FeatureTable> features;
  SynthTruth truth;
};

// Samples a planted-latent benchmark: unit-Gaussian user/item latents, each
// user's positives drawn without replacement with probability proportional
// to softmax of latent dot products, and per-modality features given by a
// fixed random linear map of the item latent plus Gaussian noise.
SynthData synth_generate(const SynthSpec& spec, std::uint64_t seed);

// Per-user positive sets drawn by the generator (exposed for sampling tests).
std::vector<std::vector<std::uint32_t>> synth_sample_positives(const Matrix<double>& user_latent,
                                                               const Matrix<double>& item_latent,
                                                               std::size_t per_user,
                                                               std::uint64_t seed);

}  // namespace trustrec
