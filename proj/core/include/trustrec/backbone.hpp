#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trustrec/corpus.hpp"
#include "trustrec/matrix.hpp"
#include "trustrec/rng.hpp"
#include "trustrec/sparse.hpp"

namespace trustrec {

enum class ModelKind { lightgcn, vbpr, modality_knn };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);
bool uses_features(ModelKind kind);
bool uses_graph(ModelKind kind);

// Row-compressed adjacency. For the user-item graph nodes 0..M-1 are users
// and M..M+N-1 are items.
using SparseRowGraph = CsrMatrix;

template <typename Real>
struct ModalityBlock {
  std::string name;
  Matrix<Real> features;    // N x d_m, frozen input
  Matrix<Real> projection;  // d x d_m, trainable
  Matrix<Real> preference;  // M x d, trainable (vbpr only)
};

// Parameters, attached inputs and the forward cache of one scorer. `Real`
// is the parameter storage type; all accumulation happens in double.
template <typename Real>
struct EmbeddingModelT {
  ModelKind kind = ModelKind::lightgcn;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t dim = 0;
  std::size_t num_layers = 2;

  Matrix<Real> user_table;  // e^(0) for users
  Matrix<Real> item_table;  // e^(0) for items
  std::vector<ModalityBlock<Real>> modalities;

  SparseRowGraph adjacency;   // user-item, lightgcn and modality_knn
  SparseRowGraph item_graph;  // item-item, modality_knn

  // Forward cache, valid while `propagated` is true.
  bool propagated = false;
  Matrix<double> user_repr;                  // vector dotted with the item side
  Matrix<double> item_avg;                   // layer-averaged item embeddings (graph kinds)
  Matrix<double> item_repr;                  // item side of the dot product
  std::vector<Matrix<double>> projected;     // per modality: features * projection^T
  std::vector<Matrix<double>> layer_outputs; // e^(0..L) over all M+N nodes (graph kinds)
  Matrix<double> score_items_t;              // item side of every score term, transposed

  void invalidate() { propagated = false; }
};

using EmbeddingModel = EmbeddingModelT<float>;
using EmbeddingModel64 = EmbeddingModelT<double>;

// Uniform Xavier bound for a rows x cols table.
double xavier_bound(std::size_t rows, std::size_t cols);

template <typename Real>
void xavier_fill(Matrix<Real>& m, SplitMix64& rng);

// Allocates and Xavier-initializes user/item tables.
template <typename Real>
EmbeddingModelT<Real> init_embeddings(ModelKind kind, std::size_t num_users, std::size_t num_items,
                                      std::size_t dim, std::size_t num_layers, std::uint64_t seed);

// Attaches frozen features and initializes per-modality projections (and
// user preference tables for vbpr).
template <typename Real>
void attach_features(EmbeddingModelT<Real>& model, std::span<const FeatureTable> features, std::uint64_t seed);

// Symmetric normalization 1/sqrt(deg(u) deg(i)) on both directions of every edge.
SparseRowGraph build_norm_adjacency(const InteractionSet& edges);

// Per modality cosine top-k neighbours (self excluded, ties to the lower
// index), averaged across modalities with equal weight, rows L1-normalized.
SparseRowGraph build_item_knn_graph(std::span<const FeatureTable> features, std::size_t k);

// Mean of e^(0..L) with e^(l+1) = graph * e^(l). Rows of `ego` are nodes.
Matrix<double> propagate_layers(const SparseRowGraph& graph, const Matrix<double>& ego, std::size_t num_layers,
                                std::vector<Matrix<double>>* layers = nullptr);

// Fills the forward cache from the current parameters.
template <typename Real>
void propagate(EmbeddingModelT<Real>& model);

// Scores of every item for user u. Throws std::logic_error when the cache is stale.
template <typename Real>
void score_user(const EmbeddingModelT<Real>& model, std::uint32_t user, std::span<double> out);

template <typename Real>
double score_pair(const EmbeddingModelT<Real>& model, std::uint32_t user, std::uint32_t item);

struct Triplet {
  std::uint32_t user;
  std::uint32_t pos;
  std::uint32_t neg;
};

// Gradient buffers mirroring the trainable parameters.
struct ModelGradients {
  Matrix<double> user;
  Matrix<double> item;
  std::vector<Matrix<double>> projection;
  std::vector<Matrix<double>> preference;
};

// Batch-mean BPR loss plus l2 * mean over triplets of 0.5 * (|e_u|^2 +
// |e_i|^2 + |e_j|^2 [+ |theta_u^m|^2]) on the ego embeddings touched by the
// batch. Propagates first. When `grad` is given it receives the analytic
// gradient of that loss with respect to every trainable parameter.
template <typename Real>
double bpr_loss(EmbeddingModelT<Real>& model, std::span<const Triplet> batch, double l2,
                ModelGradients* grad = nullptr);

// -log(sigmoid(x)) without overflow.
double softplus_neg(double x);

// Adam with bias correction over every trainable parameter.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  template <typename Real>
  void step(EmbeddingModelT<Real>& model, const ModelGradients& grad);

  std::size_t steps() const { return t_; }

 private:
  template <typename Real>
  void update(Matrix<Real>& param, const Matrix<double>& g, std::size_t slot);

  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainConfig {
  double lr = 1e-3;
  double l2 = 1e-4;
  std::size_t batch_size = 2048;
  std::size_t eval_batch_size = 4096;
  std::size_t max_epochs = 1000;
  std::size_t patience = 30;
  std::uint64_t seed = 1;
  std::ostream* log = nullptr;  // per-epoch progress lines when set
};

// One optimizer step on a batch; returns the batch loss. Throws
// std::runtime_error with diagnostics if the loss is not finite.
template <typename Real>
double bpr_step(EmbeddingModelT<Real>& model, std::span<const Triplet> batch, const TrainConfig& config,
                AdamOptimizer& optimizer);

// Negative item for `user`, uniform over items outside `positives` (sorted).
std::uint32_t sample_negative(std::span<const std::uint32_t> positives, std::size_t num_items, SplitMix64& rng);

// Patience-based stopping on a maximized metric.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}
  // Records the metric of `epoch`; returns true when training should stop.
  bool update(std::size_t epoch, double metric);
  bool improved_last() const { return improved_last_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = -1.0;
  bool improved_last_ = false;
};

struct EpochRecord {
  std::size_t epoch;
  double loss;
  double val_recall_at_10;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_recall = 0.0;
};

// Trains with shuffled BPR batches from `supervision`, message passing over
// `propagation`, validation Recall@10 after each epoch, early stopping, and
// leaves the best-validation parameters in `model`.
template <typename Real>
TrainResult train(EmbeddingModelT<Real>& model, const SplitDataset& split, const TrainConfig& config,
                  const InteractionSet& supervision, const InteractionSet& propagation);

// Default form: supervision and propagation are the split's train edges.
template <typename Real>
TrainResult train(EmbeddingModelT<Real>& model, const SplitDataset& split, const TrainConfig& config);

void write_history_csv(const TrainResult& result, const std::filesystem::path& path);

// Checkpoint: "TRM1 <kind> <M> <N> <d> <L>\n" followed by named tables, each
// as "TABLE <name>\n" and one MMF1 block. Names: user, item, proj.<m>,
// pref.<m>, and for propagated graph models avg.user / avg.item.
struct Checkpoint {
  ModelKind kind = ModelKind::lightgcn;
  std::size_t num_users = 0, num_items = 0, dim = 0, num_layers = 0;
  std::vector<std::pair<std::string, Matrix<float>>> tables;

  const Matrix<float>* find(std::string_view name) const;
};

void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds a scorable model from a checkpoint plus the inputs it was trained with.
EmbeddingModel restore_model(const Checkpoint& ckpt, std::span<const FeatureTable> features,
                             const InteractionSet& propagation, std::size_t knn_k);

}  // namespace trustrec
