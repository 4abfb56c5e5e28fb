#include "trustrec/edge_editor.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "trustrec/errors.hpp"
#include "trustrec/rng.hpp"

namespace trustrec {

template <typename Real>
CollabPrior prior_from_model(const EmbeddingModelT<Real>& model, std::string id) {
  if (!model.propagated) throw std::logic_error("collaborative prior needs a propagated model");
  return CollabPrior{model.user_repr, model.item_avg, std::move(id)};
}

template CollabPrior prior_from_model(const EmbeddingModelT<float>&, std::string);
template CollabPrior prior_from_model(const EmbeddingModelT<double>&, std::string);

CollabPrior prior_from_checkpoint(const Checkpoint& ckpt, std::string id) {
  const auto* users = ckpt.find("avg.user");
  const auto* items = ckpt.find("avg.item");
  if (!users || !items) {
    users = ckpt.find("user");
    items = ckpt.find("item");
  }
  return CollabPrior{users->cast<double>(), items->cast<double>(), std::move(id)};
}

std::vector<double> collab_similarity(const CollabPrior& prior, std::span<const Edge> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const Edge& e : pairs) {
    if (e.user >= prior.users.rows() || e.item >= prior.items.rows())
      throw std::out_of_range("pair (" + std::to_string(e.user) + ", " + std::to_string(e.item) +
                              ") outside the prior's tables");
    out.push_back(dot(prior.users.row(e.user), prior.items.row(e.item)));
  }
  return out;
}

std::string_view to_string(EditTarget target) {
  switch (target) {
    case EditTarget::train_only: return "train_only";
    case EditTarget::graph_only: return "graph_only";
    case EditTarget::both: return "both";
  }
  return "unknown";
}

std::string_view to_string(EditOp op) { return op == EditOp::prune ? "prune" : "complete"; }

EditTarget parse_edit_target(std::string_view name) {
  if (name == "train" || name == "train_only") return EditTarget::train_only;
  if (name == "graph" || name == "graph_only") return EditTarget::graph_only;
  if (name == "both") return EditTarget::both;
  throw ConfigError("unknown edit target '" + std::string(name) + "'");
}

EditOp parse_edit_op(std::string_view name) {
  if (name == "prune") return EditOp::prune;
  if (name == "complete" || name == "add") return EditOp::complete;
  throw ConfigError("unknown edit op '" + std::string(name) + "'");
}

namespace {

void check_ratio(double r) {
  if (!(r >= 0.0 && r < 1.0)) throw ConfigError("edit ratio r must lie in [0, 1)");
}

bool lower_first(const ScoredEdge& a, const ScoredEdge& b) {
  if (a.score != b.score) return a.score < b.score;
  return a.edge < b.edge;
}

bool higher_first(const ScoredEdge& a, const ScoredEdge& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.edge < b.edge;
}

}  // namespace

EditPlan prune_edges(const InteractionSet& train, const CollabPrior& prior, double r) {
  check_ratio(r);
  EditPlan plan;
  plan.op = EditOp::prune;
  plan.ratio = r;
  plan.prior_id = prior.id;
  const std::size_t count = floor_count(r, train.size());
  if (count == 0) return plan;
  const auto scores = collab_similarity(prior, train.edges());
  std::vector<ScoredEdge> ranked;
  ranked.reserve(train.size());
  for (std::size_t k = 0; k < train.size(); ++k) ranked.push_back({train.edges()[k], scores[k]});
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(count), ranked.end(), lower_first);
  ranked.resize(count);
  plan.removals = std::move(ranked);
  return plan;
}

EditPlan complete_edges(const InteractionSet& train, const CollabPrior& prior, double r, std::size_t k_user,
                        std::size_t k_item, const InteractionSet& holdout) {
  check_ratio(r);
  if (k_user == 0 || k_item == 0) throw ConfigError("completion needs k_user >= 1 and k_item >= 1");
  EditPlan plan;
  plan.op = EditOp::complete;
  plan.ratio = r;
  plan.k_user = k_user;
  plan.k_item = k_item;
  plan.prior_id = prior.id;
  const std::size_t count = floor_count(r, train.size());
  if (count == 0) return plan;

  const std::size_t M = train.num_users(), N = train.num_items();
  const auto positives = train.items_by_user();
  // Per-item bounded candidate lists, kept sorted best-first.
  std::vector<std::vector<ScoredEdge>> by_item(N);
  std::vector<ScoredEdge> candidates;
  std::vector<ScoredEdge> row;
  for (std::uint32_t u = 0; u < M; ++u) {
    row.clear();
    const auto& pos = positives[u];
    for (std::uint32_t i = 0; i < N; ++i) {
      if (std::binary_search(pos.begin(), pos.end(), i)) continue;
      const ScoredEdge se{{u, i}, dot(prior.users.row(u), prior.items.row(i))};
      row.push_back(se);
      auto& list = by_item[i];
      if (list.size() < k_item || higher_first(se, list.back())) {
        list.insert(std::upper_bound(list.begin(), list.end(), se, higher_first), se);
        if (list.size() > k_item) list.pop_back();
      }
    }
    const std::size_t take = std::min(k_user, row.size());
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(take), row.end(), higher_first);
    candidates.insert(candidates.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(take));
  }
  for (const auto& list : by_item) candidates.insert(candidates.end(), list.begin(), list.end());
  std::sort(candidates.begin(), candidates.end(), [](const ScoredEdge& a, const ScoredEdge& b) { return a.edge < b.edge; });
  candidates.erase(std::unique(candidates.begin(), candidates.end(),
                               [](const ScoredEdge& a, const ScoredEdge& b) { return a.edge == b.edge; }),
                   candidates.end());

  const std::size_t take = std::min(count, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                    higher_first);
  candidates.resize(take);
  for (const auto& c : candidates) {
    if (holdout.contains(c.edge)) {
      ++plan.dropped_holdout;
      continue;
    }
    plan.additions.push_back(c);
  }
  return plan;
}

EditedEdges apply_edit(const InteractionSet& train, const EditPlan& plan) {
  std::vector<Edge> removed, added;
  for (const auto& s : plan.removals) {
    if (!train.contains(s.edge))
      throw DataError("edit plan removes (" + std::to_string(s.edge.user) + ", " + std::to_string(s.edge.item) +
                      ") which is not a training edge");
    removed.push_back(s.edge);
  }
  for (const auto& s : plan.additions) {
    if (train.contains(s.edge))
      throw DataError("edit plan adds (" + std::to_string(s.edge.user) + ", " + std::to_string(s.edge.item) +
                      ") which is already a training edge");
    added.push_back(s.edge);
  }
  const InteractionSet edited = set_union(set_difference(train, removed), added);
  switch (plan.target) {
    case EditTarget::train_only: return {edited, train};
    case EditTarget::graph_only: return {train, edited};
    case EditTarget::both: return {edited, edited};
  }
  return {train, train};
}

void write_edit_plan(const EditPlan& plan, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# op=" << to_string(plan.op) << " target=" << to_string(plan.target) << " r=" << plan.ratio
      << " k_user=" << plan.k_user << " k_item=" << plan.k_item << " dropped_holdout=" << plan.dropped_holdout
      << " prior=" << (plan.prior_id.empty() ? "-" : plan.prior_id) << '\n';
  out << "op\tuser\titem\tscore\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& s : plan.removals) out << "-\t" << s.edge.user << '\t' << s.edge.item << '\t' << s.score << '\n';
  for (const auto& s : plan.additions) out << "+\t" << s.edge.user << '\t' << s.edge.item << '\t' << s.score << '\n';
}

EditPlan read_edit_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  EditPlan plan;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string kv;
      while (ss >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const auto key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "op") plan.op = parse_edit_op(value);
        else if (key == "target") plan.target = parse_edit_target(value);
        else if (key == "r") plan.ratio = std::stod(value);
        else if (key == "k_user") plan.k_user = std::stoul(value);
        else if (key == "k_item") plan.k_item = std::stoul(value);
        else if (key == "dropped_holdout") plan.dropped_holdout = std::stoul(value);
        else if (key == "prior") plan.prior_id = value == "-" ? "" : value;
      }
      continue;
    }
    if (line.rfind("op\t", 0) == 0) continue;
    std::istringstream ss(line);
    std::string op;
    ScoredEdge s;
    if (!(ss >> op >> s.edge.user >> s.edge.item >> s.score) || (op != "+" && op != "-"))
      throw DataError(path.string() + ": malformed plan line '" + line + "'");
    (op == "+" ? plan.additions : plan.removals).push_back(s);
  }
  return plan;
}

InteractionSet holdout_edges(const SplitDataset& split) {
  return set_union(split.val(), split.test().edges());
}

}  // namespace trustrec
