#include <fstream>
#include <sstream>

#include "trustrec/backbone.hpp"
#include "trustrec/errors.hpp"

namespace trustrec {

const Matrix<float>* Checkpoint::find(std::string_view name) const {
  for (const auto& [key, table] : tables)
    if (key == name) return &table;
  return nullptr;
}

void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "TRM1 " << to_string(model.kind) << ' ' << model.num_users << ' ' << model.num_items << ' ' << model.dim
      << ' ' << model.num_layers << '\n';
  auto block = [&](const std::string& name, const Matrix<float>& m) {
    out << "TABLE " << name << '\n';
    write_mmf1_block(out, m);
  };
  block("user", model.user_table);
  block("item", model.item_table);
  for (const auto& b : model.modalities) {
    block("proj." + b.name, b.projection);
    if (model.kind == ModelKind::vbpr) block("pref." + b.name, b.preference);
  }
  if (model.propagated && uses_graph(model.kind)) {
    block("avg.user", model.user_repr.cast<float>());
    block("avg.item", model.item_avg.cast<float>());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, kind;
  Checkpoint ckpt;
  if (!(hs >> magic >> kind >> ckpt.num_users >> ckpt.num_items >> ckpt.dim >> ckpt.num_layers) || magic != "TRM1")
    throw DataError(path.string() + ": bad checkpoint header '" + header + "'");
  ckpt.kind = parse_model_kind(kind);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("TABLE ", 0) != 0) throw DataError(path.string() + ": expected TABLE line, got '" + line + "'");
    const std::string name = line.substr(6);
    ckpt.tables.emplace_back(name, read_mmf1_block(in, path.string() + ":" + name));
  }
  const auto* user = ckpt.find("user");
  const auto* item = ckpt.find("item");
  if (!user || !item || user->rows() != ckpt.num_users || item->rows() != ckpt.num_items || user->cols() != ckpt.dim ||
      item->cols() != ckpt.dim)
    throw DataError(path.string() + ": embedding tables missing or inconsistent with header");
  return ckpt;
}

EmbeddingModel restore_model(const Checkpoint& ckpt, std::span<const FeatureTable> features,
                             const InteractionSet& propagation, std::size_t knn_k) {
  auto model = init_embeddings<float>(ckpt.kind, ckpt.num_users, ckpt.num_items, ckpt.dim, ckpt.num_layers, 0);
  model.user_table = *ckpt.find("user");
  model.item_table = *ckpt.find("item");
  if (uses_features(ckpt.kind)) {
    attach_features(model, features, 0);
    for (auto& b : model.modalities) {
      const auto* proj = ckpt.find("proj." + b.name);
      if (!proj || proj->rows() != b.projection.rows() || proj->cols() != b.projection.cols())
        throw DataError("checkpoint lacks a matching projection for modality '" + b.name + "'");
      b.projection = *proj;
      if (ckpt.kind == ModelKind::vbpr) {
        const auto* pref = ckpt.find("pref." + b.name);
        if (!pref || pref->rows() != ckpt.num_users) throw DataError("checkpoint lacks preferences for '" + b.name + "'");
        b.preference = *pref;
      }
    }
  }
  if (uses_graph(ckpt.kind)) model.adjacency = build_norm_adjacency(propagation);
  if (ckpt.kind == ModelKind::modality_knn) model.item_graph = build_item_knn_graph(features, knn_k);
  propagate(model);
  return model;
}

}  // namespace trustrec
