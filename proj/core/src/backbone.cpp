#include "trustrec/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "trustrec/errors.hpp"
#include "trustrec/evaluator.hpp"
#include "trustrec/rng.hpp"

namespace trustrec {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::lightgcn: return "lightgcn";
    case ModelKind::vbpr: return "vbpr";
    case ModelKind::modality_knn: return "modality_knn";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "lightgcn") return ModelKind::lightgcn;
  if (name == "vbpr") return ModelKind::vbpr;
  if (name == "modality_knn") return ModelKind::modality_knn;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

bool uses_features(ModelKind kind) { return kind != ModelKind::lightgcn; }
bool uses_graph(ModelKind kind) { return kind != ModelKind::vbpr; }

double xavier_bound(std::size_t rows, std::size_t cols) {
  return std::sqrt(6.0 / static_cast<double>(rows + cols));
}

template <typename Real>
void xavier_fill(Matrix<Real>& m, SplitMix64& rng) {
  const double bound = xavier_bound(m.rows(), m.cols());
  for (auto& x : m.flat()) x = static_cast<Real>(rng.uniform(-bound, bound));
}

template <typename Real>
EmbeddingModelT<Real> init_embeddings(ModelKind kind, std::size_t num_users, std::size_t num_items, std::size_t dim,
                                      std::size_t num_layers, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  EmbeddingModelT<Real> m;
  m.kind = kind;
  m.num_users = num_users;
  m.num_items = num_items;
  m.dim = dim;
  m.num_layers = num_layers;
  m.user_table = Matrix<Real>(num_users, dim);
  m.item_table = Matrix<Real>(num_items, dim);
  auto user_rng = derive_stream("init.user", seed);
  auto item_rng = derive_stream("init.item", seed);
  xavier_fill(m.user_table, user_rng);
  xavier_fill(m.item_table, item_rng);
  return m;
}

template <typename Real>
void attach_features(EmbeddingModelT<Real>& model, std::span<const FeatureTable> features, std::uint64_t seed) {
  model.modalities.clear();
  for (const auto& table : features) {
    if (table.num_items() != model.num_items)
      throw DataError("feature table '" + table.modality + "' has " + std::to_string(table.num_items()) +
                      " rows, model has " + std::to_string(model.num_items) + " items");
    ModalityBlock<Real> block;
    block.name = table.modality;
    block.features = table.rows.template cast<Real>();
    block.projection = Matrix<Real>(model.dim, table.dim());
    auto proj_rng = derive_stream("init.proj." + table.modality, seed);
    xavier_fill(block.projection, proj_rng);
    if (model.kind == ModelKind::vbpr) {
      block.preference = Matrix<Real>(model.num_users, model.dim);
      auto pref_rng = derive_stream("init.pref." + table.modality, seed);
      xavier_fill(block.preference, pref_rng);
    }
    model.modalities.push_back(std::move(block));
  }
  model.invalidate();
}

SparseRowGraph build_norm_adjacency(const InteractionSet& edges) {
  const std::size_t M = edges.num_users(), N = edges.num_items();
  const auto udeg = edges.user_degrees();
  const auto ideg = edges.item_degrees();
  const auto by_user = edges.items_by_user();
  std::vector<std::vector<std::uint32_t>> by_item(N);
  for (const Edge& e : edges.edges()) by_item[e.item].push_back(e.user);

  CsrBuilder b(M + N, M + N);
  for (std::uint32_t u = 0; u < M; ++u) {
    for (const auto i : by_user[u])
      b.push(static_cast<std::uint32_t>(M + i), 1.0 / std::sqrt(static_cast<double>(udeg[u] * ideg[i])));
    b.end_row();
  }
  for (std::uint32_t i = 0; i < N; ++i) {
    for (const auto u : by_item[i]) b.push(u, 1.0 / std::sqrt(static_cast<double>(udeg[u] * ideg[i])));
    b.end_row();
  }
  return b.finish();
}

SparseRowGraph build_item_knn_graph(std::span<const FeatureTable> features, std::size_t k) {
  if (k == 0) throw ConfigError("item graph needs k >= 1");
  if (features.empty()) throw ConfigError("item graph needs at least one modality");
  const std::size_t N = features.front().num_items();
  Matrix<double> weights(N, N);
  const double share = 1.0 / static_cast<double>(features.size());
  for (const auto& table : features) {
    if (table.num_items() != N) throw DataError("modalities disagree on item count");
    Matrix<double> unit(N, table.dim());
    for (std::size_t i = 0; i < N; ++i) {
      const auto src = table.rows.row(i);
      const double norm = std::sqrt(dot(src, src));
      for (std::size_t c = 0; c < table.dim(); ++c) unit(i, c) = norm > 0 ? src[c] / norm : 0.0;
    }
    const std::size_t take = std::min(k, N - 1);
    std::vector<double> sim(N);
    std::vector<std::uint32_t> order;
    for (std::size_t i = 0; i < N; ++i) {
      order.clear();
      for (std::size_t j = 0; j < N; ++j) {
        if (j == i) continue;
        sim[j] = dot(unit.row(i), unit.row(j));
        order.push_back(static_cast<std::uint32_t>(j));
      }
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                        [&](std::uint32_t a, std::uint32_t b) { return sim[a] != sim[b] ? sim[a] > sim[b] : a < b; });
      for (std::size_t n = 0; n < take; ++n) weights(i, order[n]) += share;
    }
  }
  CsrBuilder b(N, N);
  for (std::size_t i = 0; i < N; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < N; ++j) total += weights(i, j);
    for (std::size_t j = 0; j < N; ++j)
      if (weights(i, j) > 0) b.push(static_cast<std::uint32_t>(j), weights(i, j) / total);
    b.end_row();
  }
  return b.finish();
}

Matrix<double> propagate_layers(const SparseRowGraph& graph, const Matrix<double>& ego, std::size_t num_layers,
                                std::vector<Matrix<double>>* layers) {
  Matrix<double> sum = ego;
  Matrix<double> current = ego;
  if (layers) {
    layers->clear();
    layers->push_back(ego);
  }
  for (std::size_t l = 0; l < num_layers; ++l) {
    Matrix<double> next;
    csr_times_dense(graph, current, next);
    for (std::size_t k = 0; k < sum.size(); ++k) sum.flat()[k] += next.flat()[k];
    current = std::move(next);
    if (layers) layers->push_back(current);
  }
  const double scale = 1.0 / static_cast<double>(num_layers + 1);
  for (auto& x : sum.flat()) x *= scale;
  return sum;
}

namespace {

template <typename Real>
Matrix<double> project_rows(const Matrix<Real>& features, const Matrix<Real>& projection) {
  // out[i] = projection * features[i]
  const std::size_t N = features.rows(), d = projection.rows(), dm = projection.cols();
  Matrix<double> out(N, d);
  for (std::size_t i = 0; i < N; ++i) {
    const auto x = features.row(i);
    for (std::size_t a = 0; a < d; ++a) {
      const auto w = projection.row(a);
      double acc = 0.0;
      for (std::size_t b = 0; b < dm; ++b) acc += static_cast<double>(w[b]) * static_cast<double>(x[b]);
      out(i, a) = acc;
    }
  }
  return out;
}

// grad[a][b] += sum_i row_grad[i][a] * features[i][b]
template <typename Real>
void accumulate_projection_grad(const Matrix<double>& row_grad, const Matrix<Real>& features, Matrix<double>& grad) {
  const std::size_t N = features.rows(), d = row_grad.cols(), dm = features.cols();
  for (std::size_t i = 0; i < N; ++i) {
    const auto g = row_grad.row(i);
    const auto x = features.row(i);
    for (std::size_t a = 0; a < d; ++a) {
      if (g[a] == 0.0) continue;
      auto out = grad.row(a);
      for (std::size_t b = 0; b < dm; ++b) out[b] += g[a] * static_cast<double>(x[b]);
    }
  }
}

template <typename Real>
void require_graph(const EmbeddingModelT<Real>& m) {
  if (m.adjacency.num_rows != m.num_users + m.num_items)
    throw std::logic_error("no user-item propagation graph attached to the " + std::string(to_string(m.kind)) +
                           " model");
  if (m.kind == ModelKind::modality_knn && m.item_graph.num_rows != m.num_items)
    throw std::logic_error("modality_knn model has no item graph attached");
}

double sigmoid_neg(double x) {
  // sigmoid(-x)
  if (x >= 0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

}  // namespace

double softplus_neg(double x) {
  if (x > 0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

template <typename Real>
void propagate(EmbeddingModelT<Real>& m) {
  const std::size_t M = m.num_users, N = m.num_items, d = m.dim;
  m.projected.clear();
  for (const auto& block : m.modalities) m.projected.push_back(project_rows(block.features, block.projection));

  if (uses_graph(m.kind)) {
    require_graph(m);
    Matrix<double> ego(M + N, d);
    for (std::size_t u = 0; u < M; ++u)
      for (std::size_t c = 0; c < d; ++c) ego(u, c) = m.user_table(u, c);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t c = 0; c < d; ++c) ego(M + i, c) = m.item_table(i, c);
    const auto avg = propagate_layers(m.adjacency, ego, m.num_layers, &m.layer_outputs);
    m.user_repr = Matrix<double>(M, d);
    m.item_avg = Matrix<double>(N, d);
    std::copy_n(avg.flat().begin(), M * d, m.user_repr.flat().begin());
    std::copy_n(avg.flat().begin() + static_cast<std::ptrdiff_t>(M * d), N * d, m.item_avg.flat().begin());
    m.item_repr = m.item_avg;
    if (m.kind == ModelKind::modality_knn && !m.projected.empty()) {
      Matrix<double> fused(N, d);
      for (const auto& p : m.projected)
        for (std::size_t k = 0; k < fused.size(); ++k) fused.flat()[k] += p.flat()[k];
      Matrix<double> smoothed;
      csr_times_dense(m.item_graph, fused, smoothed);
      for (std::size_t k = 0; k < smoothed.size(); ++k) m.item_repr.flat()[k] += smoothed.flat()[k];
    }
  } else {
    m.layer_outputs.clear();
    m.user_repr = m.user_table.template cast<double>();
    m.item_avg = m.item_table.template cast<double>();
    m.item_repr = m.item_avg;
  }
  // Stack every item-side term column-wise so scoring a user is a sequence
  // of contiguous axpy passes over items.
  std::size_t width = d;
  if (m.kind == ModelKind::vbpr)
    for (const auto& p : m.projected) width += p.cols();
  m.score_items_t = Matrix<double>(width, N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t c = 0; c < d; ++c) m.score_items_t(c, i) = m.item_repr(i, c);
  if (m.kind == ModelKind::vbpr) {
    std::size_t offset = d;
    for (const auto& p : m.projected) {
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < p.cols(); ++c) m.score_items_t(offset + c, i) = p(i, c);
      offset += p.cols();
    }
  }
  m.propagated = true;
}

template <typename Real>
void score_user(const EmbeddingModelT<Real>& m, std::uint32_t user, std::span<double> out) {
  if (!m.propagated) throw std::logic_error("score requested on an unpropagated model");
  std::vector<double> weights(m.user_repr.row(user).begin(), m.user_repr.row(user).end());
  if (m.kind == ModelKind::vbpr)
    for (const auto& block : m.modalities)
      for (const auto x : block.preference.row(user)) weights.push_back(static_cast<double>(x));
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t N = m.num_items;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    const double w = weights[c];
    const double* col = m.score_items_t.row(c).data();
    double* dst = out.data();
    for (std::size_t i = 0; i < N; ++i) dst[i] += w * col[i];
  }
}

template <typename Real>
double score_pair(const EmbeddingModelT<Real>& m, std::uint32_t user, std::uint32_t item) {
  if (!m.propagated) throw std::logic_error("score requested on an unpropagated model");
  double s = dot(m.user_repr.row(user), m.item_repr.row(item));
  if (m.kind == ModelKind::vbpr)
    for (std::size_t b = 0; b < m.modalities.size(); ++b)
      s += dot(m.modalities[b].preference.row(user), m.projected[b].row(item));
  return s;
}

template <typename Real>
double bpr_loss(EmbeddingModelT<Real>& m, std::span<const Triplet> batch, double l2, ModelGradients* grad) {
  propagate(m);
  if (batch.empty()) return 0.0;
  const std::size_t M = m.num_users, N = m.num_items, d = m.dim;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool vbpr = m.kind == ModelKind::vbpr;

  Matrix<double> d_user, d_item;
  std::vector<Matrix<double>> d_pref, d_proj_rows;
  if (grad) {
    d_user = Matrix<double>(M, d);
    d_item = Matrix<double>(N, d);
    for (const auto& block : m.modalities) {
      d_proj_rows.emplace_back(N, d);
      if (vbpr) d_pref.emplace_back(M, d);
      (void)block;
    }
  }

  double loss = 0.0;
  double reg = 0.0;
  for (const Triplet& t : batch) {
    const double x = score_pair(m, t.user, t.pos) - score_pair(m, t.user, t.neg);
    loss += softplus_neg(x);
    auto sq = [](auto row) { return dot(row, row); };
    reg += 0.5 * (sq(m.user_table.row(t.user)) + sq(m.item_table.row(t.pos)) + sq(m.item_table.row(t.neg)));
    if (vbpr)
      for (const auto& block : m.modalities) reg += 0.5 * sq(block.preference.row(t.user));
    if (!grad) continue;

    const double coef = -sigmoid_neg(x) * inv_b;
    const auto eu = m.user_repr.row(t.user);
    const auto ei = m.item_repr.row(t.pos);
    const auto ej = m.item_repr.row(t.neg);
    auto gu = d_user.row(t.user);
    auto gi = d_item.row(t.pos);
    auto gj = d_item.row(t.neg);
    for (std::size_t c = 0; c < d; ++c) {
      gu[c] += coef * (ei[c] - ej[c]);
      gi[c] += coef * eu[c];
      gj[c] -= coef * eu[c];
    }
    if (vbpr) {
      for (std::size_t b = 0; b < m.modalities.size(); ++b) {
        const auto theta = m.modalities[b].preference.row(t.user);
        const auto pi = m.projected[b].row(t.pos);
        const auto pj = m.projected[b].row(t.neg);
        auto gt = d_pref[b].row(t.user);
        auto gpi = d_proj_rows[b].row(t.pos);
        auto gpj = d_proj_rows[b].row(t.neg);
        for (std::size_t c = 0; c < d; ++c) {
          gt[c] += coef * (pi[c] - pj[c]);
          gpi[c] += coef * theta[c];
          gpj[c] -= coef * theta[c];
        }
      }
    }
  }
  loss = loss * inv_b + l2 * reg * inv_b;
  if (!grad) return loss;

  grad->projection.clear();
  grad->preference.clear();
  if (uses_graph(m.kind)) {
    // Adjoint of the layer average: the normalized adjacency is symmetric.
    Matrix<double> g(M + N, d);
    std::copy(d_user.flat().begin(), d_user.flat().end(), g.flat().begin());
    std::copy(d_item.flat().begin(), d_item.flat().end(), g.flat().begin() + static_cast<std::ptrdiff_t>(M * d));
    const auto back = propagate_layers(m.adjacency, g, m.num_layers);
    grad->user = Matrix<double>(M, d);
    grad->item = Matrix<double>(N, d);
    std::copy_n(back.flat().begin(), M * d, grad->user.flat().begin());
    std::copy_n(back.flat().begin() + static_cast<std::ptrdiff_t>(M * d), N * d, grad->item.flat().begin());
    if (m.kind == ModelKind::modality_knn) {
      Matrix<double> d_fused;
      csr_transposed_times_dense(m.item_graph, d_item, d_fused);
      for (const auto& block : m.modalities) {
        Matrix<double> gw(block.projection.rows(), block.projection.cols());
        accumulate_projection_grad(d_fused, block.features, gw);
        grad->projection.push_back(std::move(gw));
      }
    }
  } else {
    grad->user = std::move(d_user);
    grad->item = std::move(d_item);
    for (std::size_t b = 0; b < m.modalities.size(); ++b) {
      const auto& block = m.modalities[b];
      Matrix<double> gw(block.projection.rows(), block.projection.cols());
      accumulate_projection_grad(d_proj_rows[b], block.features, gw);
      grad->projection.push_back(std::move(gw));
      grad->preference.push_back(std::move(d_pref[b]));
    }
  }

  const double scale = l2 * inv_b;
  for (const Triplet& t : batch) {
    auto add = [&](Matrix<double>& g, const auto& table, std::uint32_t r) {
      auto dst = g.row(r);
      const auto src = table.row(r);
      for (std::size_t c = 0; c < d; ++c) dst[c] += scale * static_cast<double>(src[c]);
    };
    add(grad->user, m.user_table, t.user);
    add(grad->item, m.item_table, t.pos);
    add(grad->item, m.item_table, t.neg);
    if (vbpr)
      for (std::size_t b = 0; b < m.modalities.size(); ++b) add(grad->preference[b], m.modalities[b].preference, t.user);
  }
  return loss;
}

template <typename Real>
void AdamOptimizer::update(Matrix<Real>& param, const Matrix<double>& g, std::size_t slot) {
  if (m_.size() <= slot) {
    m_.resize(slot + 1);
    v_.resize(slot + 1);
  }
  if (m_[slot].size() != param.size()) {
    m_[slot].assign(param.size(), 0.0);
    v_[slot].assign(param.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto p = param.flat();
  const auto gf = g.flat();
  auto& mm = m_[slot];
  auto& vv = v_[slot];
  for (std::size_t k = 0; k < p.size(); ++k) {
    mm[k] = beta1_ * mm[k] + (1.0 - beta1_) * gf[k];
    vv[k] = beta2_ * vv[k] + (1.0 - beta2_) * gf[k] * gf[k];
    const double mhat = mm[k] / c1;
    const double vhat = vv[k] / c2;
    p[k] = static_cast<Real>(static_cast<double>(p[k]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
  }
}

template <typename Real>
void AdamOptimizer::step(EmbeddingModelT<Real>& model, const ModelGradients& grad) {
  ++t_;
  std::size_t slot = 0;
  update(model.user_table, grad.user, slot++);
  update(model.item_table, grad.item, slot++);
  for (std::size_t b = 0; b < grad.projection.size(); ++b) update(model.modalities[b].projection, grad.projection[b], slot++);
  for (std::size_t b = 0; b < grad.preference.size(); ++b) update(model.modalities[b].preference, grad.preference[b], slot++);
  model.invalidate();
}

template <typename Real>
double bpr_step(EmbeddingModelT<Real>& model, std::span<const Triplet> batch, const TrainConfig& config,
                AdamOptimizer& optimizer) {
  ModelGradients grad;
  const double loss = bpr_loss(model, batch, config.l2, &grad);
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite BPR loss (" << loss << ") at optimizer step " << optimizer.steps() + 1 << " on a batch of "
        << batch.size() << " triplets, model " << to_string(model.kind) << ", lr " << config.lr;
    throw std::runtime_error(msg.str());
  }
  optimizer.step(model, grad);
  return loss;
}

std::uint32_t sample_negative(std::span<const std::uint32_t> positives, std::size_t num_items, SplitMix64& rng) {
  if (positives.size() >= num_items) throw DataError("user has interacted with every item; no negative exists");
  for (;;) {
    const auto j = static_cast<std::uint32_t>(rng.below(num_items));
    if (!std::binary_search(positives.begin(), positives.end(), j)) return j;
  }
}

bool EarlyStopper::update(std::size_t epoch, double metric) {
  improved_last_ = best_epoch_ == 0 || metric > best_;
  if (improved_last_) {
    best_ = metric;
    best_epoch_ = epoch;
    stale_ = 0;
    return false;
  }
  ++stale_;
  return stale_ >= patience_;
}

namespace {

template <typename Real>
struct ParamSnapshot {
  Matrix<Real> user, item;
  std::vector<Matrix<Real>> projection, preference;

  explicit ParamSnapshot(const EmbeddingModelT<Real>& m) : user(m.user_table), item(m.item_table) {
    for (const auto& b : m.modalities) {
      projection.push_back(b.projection);
      preference.push_back(b.preference);
    }
  }
  void restore(EmbeddingModelT<Real>& m) const {
    m.user_table = user;
    m.item_table = item;
    for (std::size_t b = 0; b < m.modalities.size(); ++b) {
      m.modalities[b].projection = projection[b];
      m.modalities[b].preference = preference[b];
    }
    m.invalidate();
  }
};

}  // namespace

template <typename Real>
TrainResult train(EmbeddingModelT<Real>& model, const SplitDataset& split, const TrainConfig& config,
                  const InteractionSet& supervision, const InteractionSet& propagation) {
  if (supervision.empty()) throw DataError("cannot train on an empty supervision edge set");
  if (config.lr <= 0 || config.batch_size == 0 || config.max_epochs == 0)
    throw ConfigError("training needs positive lr, batch size and epoch budget");
  if (uses_graph(model.kind)) model.adjacency = build_norm_adjacency(propagation);

  const auto positives = supervision.items_by_user();
  std::vector<Edge> order(supervision.edges().begin(), supervision.edges().end());
  auto rng = derive_stream("train", config.seed);
  AdamOptimizer optimizer(config.lr);
  EarlyStopper stopper(config.patience);
  ParamSnapshot<Real> best(model);
  TrainResult result;
  const std::size_t cutoff[] = {10};

  std::vector<Triplet> batch;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(std::span<Edge>(order), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) {
        const Edge e = order[k];
        batch.push_back({e.user, e.item, sample_negative(positives[e.user], model.num_items, rng)});
      }
      loss_sum += bpr_step(model, batch, config, optimizer) * static_cast<double>(batch.size());
    }
    propagate(model);
    const auto val = evaluate_scorer(make_scorer(model), model.num_users, model.num_items, split.val(),
                                     split.original_train_positives(), cutoff, FilterPolicy::original_positives,
                                     config.eval_batch_size);
    const double recall = val.at_k.at(10).recall;
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    result.history.push_back({epoch, mean_loss, recall});
    if (config.log)
      *config.log << "epoch " << epoch << " loss " << mean_loss << " val_recall@10 " << recall << '\n';
    const bool stop = stopper.update(epoch, recall);
    if (stopper.improved_last()) best = ParamSnapshot<Real>(model);
    if (stop) break;
  }
  best.restore(model);
  propagate(model);
  result.best_epoch = stopper.best_epoch();
  result.best_val_recall = stopper.best_metric();
  return result;
}

template <typename Real>
TrainResult train(EmbeddingModelT<Real>& model, const SplitDataset& split, const TrainConfig& config) {
  return train(model, split, config, split.train(), split.train());
}

void write_history_csv(const TrainResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,loss,val_recall@10\n";
  out.precision(10);
  for (const auto& r : result.history) out << r.epoch << ',' << r.loss << ',' << r.val_recall_at_10 << '\n';
}

#define TRUSTREC_INSTANTIATE(Real)                                                                                \
  template void xavier_fill(Matrix<Real>&, SplitMix64&);                                                          \
  template EmbeddingModelT<Real> init_embeddings<Real>(ModelKind, std::size_t, std::size_t, std::size_t,         \
                                                       std::size_t, std::uint64_t);                               \
  template void attach_features(EmbeddingModelT<Real>&, std::span<const FeatureTable>, std::uint64_t);           \
  template void propagate(EmbeddingModelT<Real>&);                                                                \
  template void score_user(const EmbeddingModelT<Real>&, std::uint32_t, std::span<double>);                      \
  template double score_pair(const EmbeddingModelT<Real>&, std::uint32_t, std::uint32_t);                        \
  template double bpr_loss(EmbeddingModelT<Real>&, std::span<const Triplet>, double, ModelGradients*);           \
  template void AdamOptimizer::step(EmbeddingModelT<Real>&, const ModelGradients&);                               \
  template double bpr_step(EmbeddingModelT<Real>&, std::span<const Triplet>, const TrainConfig&, AdamOptimizer&); \
  template TrainResult train(EmbeddingModelT<Real>&, const SplitDataset&, const TrainConfig&,                    \
                             const InteractionSet&, const InteractionSet&);                                        \
  template TrainResult train(EmbeddingModelT<Real>&, const SplitDataset&, const TrainConfig&);

TRUSTREC_INSTANTIATE(float)
TRUSTREC_INSTANTIATE(double)

#undef TRUSTREC_INSTANTIATE

}  // namespace trustrec
