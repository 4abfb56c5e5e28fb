#include "trustrec/rectifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "trustrec/errors.hpp"
#include "trustrec/parallel.hpp"
#include "trustrec/rng.hpp"

namespace trustrec {

namespace {

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

// Adam over one flat parameter vector.
struct FlatAdam {
  explicit FlatAdam(double rate) : lr(rate) {}

  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t t = 0;
  std::vector<double> m, v;

  void step(std::span<double> param, std::span<const double> grad) {
    if (m.size() != param.size()) {
      m.assign(param.size(), 0.0);
      v.assign(param.size(), 0.0);
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < param.size(); ++k) {
      m[k] = beta1 * m[k] + (1 - beta1) * grad[k];
      v[k] = beta2 * v[k] + (1 - beta2) * grad[k] * grad[k];
      param[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
};

void project_row(const Projector& p, std::span<const double> x, std::span<double> z) {
  for (std::size_t a = 0; a < z.size(); ++a) z[a] = p.bias[a] + dot(p.weight.row(a), x);
}

Matrix<double> to_double(const FeatureTable& t) { return t.rows.cast<double>(); }

}  // namespace

// ---------------------------------------------------------------------------
// Anchors

AnchorTable anchors_from_embeddings(const Matrix<double>& items) {
  AnchorTable a;
  a.rows = items;
  a.zero_row.assign(items.rows(), 0);
  for (std::size_t i = 0; i < items.rows(); ++i) {
    auto row = a.rows.row(i);
    const double n = norm2(row);
    if (n == 0.0) {
      a.zero_row[i] = 1;
      ++a.zero_count;
      continue;
    }
    for (auto& x : row) x /= n;
  }
  return a;
}

template <typename Real>
AnchorTable anchors_from_model(const EmbeddingModelT<Real>& model) {
  if (!model.propagated) throw std::logic_error("anchors need a propagated encoder");
  return anchors_from_embeddings(model.item_avg);
}

template AnchorTable anchors_from_model(const EmbeddingModelT<float>&);
template AnchorTable anchors_from_model(const EmbeddingModelT<double>&);

AnchorTable compute_anchors(const SplitDataset& split, const InteractionSet& edges, const AnchorConfig& config,
                            EmbeddingModel* encoder) {
  if (edges.empty()) throw DataError("anchor encoder needs a non-empty training graph");
  auto model = init_embeddings<float>(ModelKind::lightgcn, split.num_users(), split.num_items(), config.dim,
                                      config.num_layers, config.train.seed);
  train(model, split, config.train, edges, edges);
  auto anchors = anchors_from_model(model);
  if (encoder) *encoder = std::move(model);
  return anchors;
}

// ---------------------------------------------------------------------------
// Projection

std::vector<std::size_t> select_small_loss(std::span<const double> losses, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("keep ratio rho must lie in (0, 1]");
  const std::size_t keep = std::max<std::size_t>(1, floor_count(rho, losses.size()));
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  order.resize(std::min(keep, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<double> projection_losses(const Projector& p, const Matrix<double>& features, const AnchorTable& anchors,
                                      std::span<const std::uint32_t> batch) {
  std::vector<double> losses(batch.size());
  std::vector<double> z(p.weight.rows());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    project_row(p, features.row(batch[k]), z);
    const double n = norm2(z);
    losses[k] = n > 0 ? 1.0 - dot(anchors.rows.row(batch[k]), std::span<const double>(z)) / n : 1.0;
  }
  return losses;
}

double projection_batch_loss(const Projector& p, const Matrix<double>& features, const AnchorTable& anchors,
                             std::span<const std::uint32_t> batch, double rho, ProjectorGrad* grad) {
  if (batch.empty()) return 0.0;
  const auto losses = projection_losses(p, features, anchors, batch);
  const auto kept = select_small_loss(losses, rho);
  const double inv = 1.0 / static_cast<double>(kept.size());
  double loss = 0.0;
  for (const auto k : kept) loss += losses[k];
  loss *= inv;
  if (!grad) return loss;

  const std::size_t d = p.weight.rows(), dm = p.weight.cols();
  grad->weight = Matrix<double>(d, dm);
  grad->bias.assign(d, 0.0);
  std::vector<double> z(d), g(d);
  for (const auto k : kept) {
    const auto item = batch[k];
    const auto x = features.row(item);
    const auto e = anchors.rows.row(item);
    project_row(p, x, z);
    const double n = norm2(z);
    if (n == 0.0) continue;
    // d(1 - <e, z/|z|>)/dz = -(e - <e, zbar> zbar) / |z|
    const double c = dot(e, std::span<const double>(z)) / n;
    for (std::size_t a = 0; a < d; ++a) g[a] = -(e[a] - c * z[a] / n) / n * inv;
    for (std::size_t a = 0; a < d; ++a) {
      grad->bias[a] += g[a];
      auto row = grad->weight.row(a);
      for (std::size_t b = 0; b < dm; ++b) row[b] += g[a] * x[b];
    }
  }
  return loss;
}

Projector train_projection(const FeatureTable& features, const AnchorTable& anchors, double rho,
                           const ProjectionConfig& config) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("keep ratio rho must lie in (0, 1]");
  if (features.num_items() != anchors.num_items()) throw DataError("features and anchors disagree on item count");
  if (config.batch_size == 0) throw ConfigError("projection batch size must be positive");
  Projector p;
  p.modality = features.modality;
  p.keep_ratio = rho;
  p.weight = Matrix<double>(anchors.dim(), features.dim());
  p.bias.assign(anchors.dim(), 0.0);
  auto rng = derive_stream("rectify.proj." + features.modality, config.seed);
  xavier_fill(p.weight, rng);

  const auto x = to_double(features);
  std::vector<std::uint32_t> eligible;
  for (std::uint32_t i = 0; i < anchors.num_items(); ++i)
    if (!anchors.zero_row[i]) eligible.push_back(i);
  if (eligible.empty()) throw DataError("every anchor row is zero; nothing to align");

  FlatAdam w_opt{config.lr}, b_opt{config.lr};
  ProjectorGrad grad;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(std::span<std::uint32_t>(eligible), rng);
    double kept_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < eligible.size(); start += config.batch_size) {
      const std::size_t stop = std::min(eligible.size(), start + config.batch_size);
      const std::span<const std::uint32_t> batch(eligible.data() + start, stop - start);
      kept_sum += projection_batch_loss(p, x, anchors, batch, rho, &grad);
      ++batches;
      w_opt.step(p.weight.flat(), grad.weight.flat());
      b_opt.step(p.bias, grad.bias);
    }
    p.kept_loss_log.push_back(kept_sum / static_cast<double>(batches));
    const auto all = projection_losses(p, x, anchors, eligible);
    p.full_loss_log.push_back(std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size()));
  }
  return p;
}

Matrix<double> project_normalized(const Projector& p, const FeatureTable& features) {
  const auto x = to_double(features);
  Matrix<double> z(features.num_items(), p.weight.rows());
  for (std::size_t i = 0; i < features.num_items(); ++i) {
    auto row = z.row(i);
    project_row(p, x.row(i), row);
    const double n = norm2(row);
    if (n > 0)
      for (auto& v : row) v /= n;
    else
      std::fill(row.begin(), row.end(), 0.0);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Affinity

SparseAffinity build_affinity(const AnchorTable& anchors, const Matrix<double>& z, std::size_t k, double tau) {
  if (k == 0) throw ConfigError("affinity top-K must be at least 1");
  if (!(tau > 0)) throw ConfigError("temperature tau must be positive");
  if (z.rows() != anchors.num_items() || z.cols() != anchors.dim())
    throw DataError("projected features do not match the anchor table shape");
  const std::size_t N = anchors.num_items();
  const std::size_t take = std::min(k, N);
  constexpr std::size_t kPanel = 256;

  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(N);
  for (std::size_t start = 0; start < N; start += kPanel) {
    const std::size_t stop = std::min(N, start + kPanel);
    parallel_for(stop - start, [&](std::size_t lo, std::size_t hi) {
      std::vector<double> s(N);
      std::vector<std::uint32_t> order(N);
      for (std::size_t off = lo; off < hi; ++off) {
        const std::size_t i = start + off;
        auto& out = rows[i];
        if (anchors.zero_row[i]) {
          out.emplace_back(static_cast<std::uint32_t>(i), 0.0);
          continue;
        }
        const auto e = anchors.rows.row(i);
        for (std::size_t j = 0; j < N; ++j) s[j] = dot(e, z.row(j));
        std::iota(order.begin(), order.end(), 0u);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                          [&](std::uint32_t a, std::uint32_t b) { return s[a] != s[b] ? s[a] > s[b] : a < b; });
        bool has_diag = false;
        for (std::size_t n = 0; n < take; ++n) {
          out.emplace_back(order[n], s[order[n]]);
          has_diag |= order[n] == i;
        }
        if (!has_diag) out.emplace_back(static_cast<std::uint32_t>(i), s[i]);
        std::sort(out.begin(), out.end());
      }
    }, 16);
  }

  CsrBuilder b(N, N);
  for (std::size_t i = 0; i < N; ++i) {
    for (const auto& [j, sim] : rows[i]) b.push(j, std::exp(sim / tau));
    b.end_row();
  }
  return SparseAffinity{b.finish(), tau, k};
}

SparseAffinity build_affinity(const AnchorTable& anchors, const Projector& projector, const FeatureTable& features,
                              std::size_t k, double tau) {
  return build_affinity(anchors, project_normalized(projector, features), k, tau);
}

// ---------------------------------------------------------------------------
// Matching

double marginal_deviation(const CsrMatrix& p) {
  double dev = 0.0;
  for (const double r : p.row_sums()) dev = std::max(dev, std::abs(r - 1.0));
  for (const double c : p.col_sums()) dev = std::max(dev, std::abs(c - 1.0));
  return dev;
}

namespace {

CsrMatrix scaled(const CsrMatrix& a, std::span<const double> u, std::span<const double> v) {
  CsrMatrix p = a;
  for (std::size_t r = 0; r < a.num_rows; ++r)
    for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) p.val[k] = u[r] * a.val[k] * v[a.col[k]];
  return p;
}

double row_normalized_deviation(const CsrMatrix& a) {
  const auto sums = a.row_sums();
  std::vector<double> u(a.num_rows), v(a.num_cols, 1.0);
  for (std::size_t r = 0; r < a.num_rows; ++r) u[r] = sums[r] > 0 ? 1.0 / sums[r] : 0.0;
  return marginal_deviation(scaled(a, u, v));
}

}  // namespace

SoftMatching sinkhorn(const CsrMatrix& a, double eps, std::size_t max_iter, double tol) {
  if (!(eps > 0)) throw ConfigError("sinkhorn eps must be positive");
  if (max_iter == 0) throw ConfigError("sinkhorn needs at least one iteration");
  SoftMatching out;
  out.method = "sinkhorn";
  out.eps = eps;
  out.initial_deviation = row_normalized_deviation(a);

  std::vector<double> u(a.num_rows, 1.0), v(a.num_cols, 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= max_iter; ++it) {
    const auto av = a.multiply(v);
    for (std::size_t r = 0; r < u.size(); ++r) u[r] = 1.0 / (av[r] + eps);
    const auto atu = a.multiply_transposed(u);
    for (std::size_t c = 0; c < v.size(); ++c) v[c] = 1.0 / (atu[c] + eps);

    // Marginals of diag(u) A diag(v).
    const auto av2 = a.multiply(v);
    double dev = 0.0;
    for (std::size_t r = 0; r < u.size(); ++r) dev = std::max(dev, std::abs(u[r] * av2[r] - 1.0));
    for (std::size_t c = 0; c < v.size(); ++c) dev = std::max(dev, std::abs(v[c] * atu[c] - 1.0));
    if (dev < best) {
      best = dev;
      out.u = u;
      out.v = v;
      out.iterations = it;
    }
    if (dev <= tol) break;
  }
  out.values = scaled(a, out.u, out.v);
  out.final_deviation = best;
  return out;
}

SoftMatching sinkhorn(const SparseAffinity& affinity, double eps, std::size_t max_iter, double tol) {
  return sinkhorn(affinity.values, eps, max_iter, tol);
}

SoftMatching row_normalize(const SparseAffinity& affinity) {
  const auto& a = affinity.values;
  SoftMatching out;
  out.method = "row_norm";
  const auto sums = a.row_sums();
  out.u.resize(a.num_rows);
  for (std::size_t r = 0; r < a.num_rows; ++r) out.u[r] = sums[r] > 0 ? 1.0 / sums[r] : 0.0;
  out.v.assign(a.num_cols, 1.0);
  out.values = scaled(a, out.u, out.v);
  out.initial_deviation = marginal_deviation(out.values);
  out.final_deviation = out.initial_deviation;
  return out;
}

FeatureTable rectify(const FeatureTable& features, const SoftMatching& matching, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  const auto& p = matching.values;
  if (p.num_rows != features.num_items() || p.num_cols != features.num_items())
    throw DataError("matching size does not match the feature table");
  FeatureTable out{features.modality, Matrix<float>(features.num_items(), features.dim())};
  const std::size_t dm = features.dim();
  std::vector<double> agg(dm);
  for (std::size_t i = 0; i < features.num_items(); ++i) {
    std::fill(agg.begin(), agg.end(), 0.0);
    for (std::size_t k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
      const auto src = features.rows.row(p.col[k]);
      for (std::size_t c = 0; c < dm; ++c) agg[c] += p.val[k] * static_cast<double>(src[c]);
    }
    const auto x = features.rows.row(i);
    auto dst = out.rows.row(i);
    for (std::size_t c = 0; c < dm; ++c)
      dst[c] = static_cast<float>(lambda * static_cast<double>(x[c]) + (1.0 - lambda) * agg[c]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

std::string_view to_string(RhoRule rule) {
  switch (rule) {
    case RhoRule::fixed: return "fixed";
    case RhoRule::keep_clean: return "keep_clean";
    case RhoRule::literal: return "literal";
  }
  return "unknown";
}

RhoRule parse_rho_rule(std::string_view name) {
  if (name == "fixed") return RhoRule::fixed;
  if (name == "keep_clean") return RhoRule::keep_clean;
  if (name == "literal") return RhoRule::literal;
  throw ConfigError("unknown rho rule '" + std::string(name) + "'");
}

double resolve_keep_ratio(const RectifyConfig& c) {
  if (!c.small_loss) return 1.0;
  if (c.rho_rule == RhoRule::fixed || !c.known_eta_m) {
    if (!(c.rho > 0 && c.rho <= 1)) throw ConfigError("rho must lie in (0, 1]");
    return c.rho;
  }
  const double eta = *c.known_eta_m;
  if (c.rho_rule == RhoRule::literal) return std::min(1.0, eta + 0.05);
  return std::clamp(1.0 - eta - 0.05, 1e-6, 1.0);
}

RectifyResult rectify_features(const AnchorTable& anchors, std::span<const FeatureTable> features,
                               const RectifyConfig& config) {
  const double keep = resolve_keep_ratio(config);
  RectifyResult result;
  auto& prov = result.provenance;
  prov["rho_rule"] = config.small_loss ? std::string(to_string(config.rho_rule)) : "disabled";
  prov["keep_ratio"] = keep;
  prov["small_loss"] = config.small_loss;
  prov["matching"] = config.use_sinkhorn ? "sinkhorn" : "row_norm";
  prov["topk"] = config.topk;
  prov["tau"] = config.tau;
  prov["lambda"] = config.lambda;
  prov["eps"] = config.eps;
  prov["sinkhorn_iters"] = config.sinkhorn_iters;
  prov["sinkhorn_tol"] = config.sinkhorn_tol;
  prov["zero_anchor_rows"] = anchors.zero_count;
  if (config.known_eta_m) prov["known_eta_m"] = *config.known_eta_m;

  for (const auto& table : features) {
    const auto projector = train_projection(table, anchors, keep, config.projection);
    const auto affinity = build_affinity(anchors, projector, table, config.topk, config.tau);
    const auto matching = config.use_sinkhorn
                              ? sinkhorn(affinity, config.eps, config.sinkhorn_iters, config.sinkhorn_tol)
                              : row_normalize(affinity);
    result.tables.push_back(rectify(table, matching, config.lambda));
    prov["modalities"][table.modality] = {
        {"dim", table.dim()},
        {"affinity_nnz", affinity.values.nnz()},
        {"matching_iterations", matching.iterations},
        {"initial_deviation", matching.initial_deviation},
        {"final_deviation", matching.final_deviation},
        {"kept_loss_curve", projector.kept_loss_log},
        {"full_loss_curve", projector.full_loss_log},
    };
  }
  return result;
}

RectifyResult rectify_pipeline(const SplitDataset& split, const InteractionSet& anchor_edges,
                               std::span<const FeatureTable> features, const RectifyConfig& config) {
  const auto anchors = compute_anchors(split, anchor_edges, config.anchor);
  auto result = rectify_features(anchors, features, config);
  result.provenance["anchor_edges"] = anchor_edges.size();
  return result;
}

double recovery_rate(const FeatureTable& corrupted, const FeatureTable& rectified, const FeatureTable& clean,
                     std::span<const std::uint32_t> items) {
  if (items.empty()) return 1.0;
  auto cosine = [](std::span<const float> a, std::span<const float> b) {
    const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
    return na > 0 && nb > 0 ? dot(a, b) / (na * nb) : 0.0;
  };
  std::size_t better = 0;
  for (const auto i : items) {
    const auto truth = clean.rows.row(i);
    better += cosine(rectified.rows.row(i), truth) > cosine(corrupted.rows.row(i), truth);
  }
  return static_cast<double>(better) / static_cast<double>(items.size());
}

}  // namespace trustrec
