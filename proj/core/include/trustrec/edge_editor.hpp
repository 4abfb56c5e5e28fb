#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trustrec/backbone.hpp"
#include "trustrec/corpus.hpp"
#include "trustrec/matrix.hpp"

namespace trustrec {

// Layer-averaged user/item embeddings of a pretrained LightGCN encoder.
struct CollabPrior {
  Matrix<double> users;
  Matrix<double> items;
  std::string id;  // provenance tag, e.g. checkpoint path or config hash
};

template <typename Real>
CollabPrior prior_from_model(const EmbeddingModelT<Real>& model, std::string id = {});
CollabPrior prior_from_checkpoint(const Checkpoint& ckpt, std::string id = {});

// s_ui = e_u . e_i with 64-bit accumulation. Throws std::out_of_range on bad indices.
std::vector<double> collab_similarity(const CollabPrior& prior, std::span<const Edge> pairs);

enum class EditTarget { train_only, graph_only, both };
enum class EditOp { prune, complete };

std::string_view to_string(EditTarget target);
std::string_view to_string(EditOp op);
EditTarget parse_edit_target(std::string_view name);  // accepts train|graph|both and the long names
EditOp parse_edit_op(std::string_view name);

struct ScoredEdge {
  Edge edge;
  double score = 0.0;
};

struct EditPlan {
  EditOp op = EditOp::prune;
  EditTarget target = EditTarget::train_only;
  double ratio = 0.0;
  std::size_t k_user = 0;
  std::size_t k_item = 0;
  std::string prior_id;
  std::vector<ScoredEdge> removals;
  std::vector<ScoredEdge> additions;
  std::size_t dropped_holdout = 0;  // selected completions removed as val/test pairs
};

// Removes the floor(r |E|) training edges with the lowest similarity,
// ranked globally (ties by (u, i)).
EditPlan prune_edges(const InteractionSet& train, const CollabPrior& prior, double r);

// Candidates: per user the top k_user non-train items, per item the top
// k_item non-train users. The union is ranked globally by similarity, the
// top floor(r |E|) are selected, and selected pairs found in `holdout` are
// then dropped without back-filling.
EditPlan complete_edges(const InteractionSet& train, const CollabPrior& prior, double r, std::size_t k_user,
                        std::size_t k_item, const InteractionSet& holdout);

struct EditedEdges {
  InteractionSet supervision;
  InteractionSet propagation;
};

// Applies the plan to the supervision and/or propagation copy of `train`.
// Throws DataError if a removal is not a training edge or an addition already is.
EditedEdges apply_edit(const InteractionSet& train, const EditPlan& plan);

// TSV: comment header with plan metadata, then "op<TAB>user<TAB>item<TAB>score".
void write_edit_plan(const EditPlan& plan, const std::filesystem::path& path);
EditPlan read_edit_plan(const std::filesystem::path& path);

// Union of validation and test edges.
InteractionSet holdout_edges(const SplitDataset& split);

}  // namespace trustrec
