#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trustrec/backbone.hpp"
#include "trustrec/corpus.hpp"
#include "trustrec/matrix.hpp"
#include "trustrec/sparse.hpp"

namespace trustrec {

// L2-normalized collaborative item embeddings. Items whose embedding is
// exactly zero keep a zero row and are flagged.
struct AnchorTable {
  Matrix<double> rows;
  std::vector<char> zero_row;
  std::size_t zero_count = 0;

  std::size_t num_items() const { return rows.rows(); }
  std::size_t dim() const { return rows.cols(); }
};

AnchorTable anchors_from_embeddings(const Matrix<double>& item_embeddings);

// Layer-averaged item embeddings of a propagated model.
template <typename Real>
AnchorTable anchors_from_model(const EmbeddingModelT<Real>& model);

struct AnchorConfig {
  std::size_t dim = 64;
  std::size_t num_layers = 2;
  TrainConfig train;
};

// Trains a LightGCN encoder on `edges` (validated on the split) and returns
// its normalized item embeddings. The trained encoder is copied to
// `encoder` when given.
AnchorTable compute_anchors(const SplitDataset& split, const InteractionSet& edges, const AnchorConfig& config,
                            EmbeddingModel* encoder = nullptr);

struct ProjectionConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double lr = 1e-2;
  std::uint64_t seed = 1;
};

// Linear map d_m -> d trained to align features with anchors.
struct Projector {
  std::string modality;
  Matrix<double> weight;     // d x d_m
  std::vector<double> bias;  // d
  double keep_ratio = 1.0;
  std::vector<double> kept_loss_log;  // mean kept loss per epoch
  std::vector<double> full_loss_log;  // mean loss over all eligible items per epoch
};

struct ProjectorGrad {
  Matrix<double> weight;
  std::vector<double> bias;
};

// Batch positions kept by small-loss selection: the max(1, floor(rho * B))
// smallest losses, ties to the earlier position. Returned in ascending order.
std::vector<std::size_t> select_small_loss(std::span<const double> losses, double rho);

// Per-item cosine loss 1 - <anchor_i, normalize(W x_i + b)> for the batch.
std::vector<double> projection_losses(const Projector& projector, const Matrix<double>& features,
                                      const AnchorTable& anchors, std::span<const std::uint32_t> batch);

// Mean kept loss over the batch; fills `grad` with its analytic gradient.
double projection_batch_loss(const Projector& projector, const Matrix<double>& features, const AnchorTable& anchors,
                             std::span<const std::uint32_t> batch, double rho, ProjectorGrad* grad = nullptr);

Projector train_projection(const FeatureTable& features, const AnchorTable& anchors, double rho,
                           const ProjectionConfig& config);

// Unit-normalized projections of every row (zero rows stay zero).
Matrix<double> project_normalized(const Projector& projector, const FeatureTable& features);

struct SparseAffinity {
  CsrMatrix values;  // exp(s_ij / tau) on the kept pattern
  double tau = 0.1;
  std::size_t k = 0;
};

// s_ij = <anchor_i, z_j>; each row keeps its top-k columns (ties to the
// lower index) plus its diagonal. Zero anchor rows keep only the diagonal.
// Rows are computed in panels so the N x N matrix is never materialized.
SparseAffinity build_affinity(const AnchorTable& anchors, const Matrix<double>& projected_unit, std::size_t k,
                              double tau);
SparseAffinity build_affinity(const AnchorTable& anchors, const Projector& projector, const FeatureTable& features,
                              std::size_t k, double tau);

struct SoftMatching {
  CsrMatrix values;  // diag(u) A diag(v)
  std::vector<double> u, v;
  double eps = 0.0;
  std::size_t iterations = 0;
  double initial_deviation = 0.0;  // of the row-normalized affinity
  double final_deviation = 0.0;
  std::string method;  // "sinkhorn" or "row_norm"
};

// max over rows and columns of |marginal - 1|
double marginal_deviation(const CsrMatrix& p);

// Alternating u <- 1/(A v + eps), v <- 1/(A^T u + eps) on the sparse
// pattern. Stops after max_iter iterations or once the deviation is <= tol,
// and returns the iterate with the smallest deviation seen.
SoftMatching sinkhorn(const CsrMatrix& affinity, double eps = 1e-8, std::size_t max_iter = 50, double tol = 1e-4);
SoftMatching sinkhorn(const SparseAffinity& affinity, double eps = 1e-8, std::size_t max_iter = 50,
                      double tol = 1e-4);

// Plain row normalization of the affinity (the Sinkhorn ablation).
SoftMatching row_normalize(const SparseAffinity& affinity);

// out_i = lambda x_i + (1 - lambda) sum_j P_ij x_j
FeatureTable rectify(const FeatureTable& features, const SoftMatching& matching, double lambda);

// How the keep ratio is chosen.
//   fixed:      use `rho` as given.
//   keep_clean: keep 1 - eta_m - 0.05 of each batch (clamped to (0, 1]).
//   literal:    keep min(1, eta_m + 0.05) of each batch.
enum class RhoRule { fixed, keep_clean, literal };
std::string_view to_string(RhoRule rule);
RhoRule parse_rho_rule(std::string_view name);

struct RectifyConfig {
  RhoRule rho_rule = RhoRule::keep_clean;
  double rho = 0.95;
  std::optional<double> known_eta_m;
  std::size_t topk = 20;
  double tau = 0.1;
  double lambda = 0.5;
  double eps = 1e-8;
  std::size_t sinkhorn_iters = 50;
  double sinkhorn_tol = 1e-4;
  bool use_sinkhorn = true;
  bool small_loss = true;
  ProjectionConfig projection;
  AnchorConfig anchor;
};

// Keep ratio actually used by projection training.
double resolve_keep_ratio(const RectifyConfig& config);

struct RectifyResult {
  std::vector<FeatureTable> tables;
  nlohmann::json provenance;
};

// Projection, affinity, matching and aggregation for each modality against
// precomputed anchors.
RectifyResult rectify_features(const AnchorTable& anchors, std::span<const FeatureTable> features,
                               const RectifyConfig& config);

// Full pipeline: anchors from `anchor_edges`, then rectify_features.
RectifyResult rectify_pipeline(const SplitDataset& split, const InteractionSet& anchor_edges,
                               std::span<const FeatureTable> features, const RectifyConfig& config);

// Fraction of `items` whose rectified row is cosine-closer to the clean row
// than the corrupted row is.
double recovery_rate(const FeatureTable& corrupted, const FeatureTable& rectified, const FeatureTable& clean,
                     std::span<const std::uint32_t> items);

}  // namespace trustrec
