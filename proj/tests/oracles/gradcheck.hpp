#pragma once

// Finite-difference checks of the analytic gradients, shared by the unit
// suite and the acceptance binary.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "oracles/oracles.hpp"
#include "trustrec/backbone.hpp"
#include "trustrec/rectifier.hpp"

namespace gradcheck {

struct Outcome {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

namespace detail {

inline std::vector<std::size_t> pick(std::size_t size, std::size_t count, std::mt19937_64& gen) {
  std::vector<std::size_t> idx(size);
  for (std::size_t k = 0; k < size; ++k) idx[k] = k;
  std::shuffle(idx.begin(), idx.end(), gen);
  idx.resize(std::min(size, count));
  return idx;
}

inline void check_block(Outcome& out, std::span<double> params, std::span<const double> analytic, double h,
                        std::size_t count, std::mt19937_64& gen, const std::function<double()>& f) {
  for (const auto k : pick(params.size(), count, gen)) {
    const double numeric = oracle::central_difference(params[k], h, f);
    out.max_rel_error = std::max(out.max_rel_error, oracle::relative_error(analytic[k], numeric));
    ++out.coordinates;
  }
}

}  // namespace detail

// BPR loss gradient of a small double-precision model of `kind`.
inline Outcome check_model(trustrec::ModelKind kind, std::uint64_t seed, std::size_t per_block = 12) {
  using namespace trustrec;
  const std::size_t M = 7, N = 6, d = 4;
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> nd;
  std::vector<Edge> edges;
  std::bernoulli_distribution keep(0.45);
  for (std::uint32_t u = 0; u < M; ++u)
    for (std::uint32_t i = 0; i < N; ++i)
      if (keep(gen) || i == u % N) edges.push_back({u, i});
  const InteractionSet graph(M, N, edges);
  std::vector<FeatureTable> feats{{"t", Matrix<float>(N, 5)}, {"v", Matrix<float>(N, 3)}};
  for (auto& t : feats)
    for (auto& x : t.rows.flat()) x = nd(gen);

  auto m = init_embeddings<double>(kind, M, N, d, 2, seed);
  if (uses_features(kind)) attach_features(m, std::span<const FeatureTable>(feats), seed);
  if (uses_graph(kind)) m.adjacency = build_norm_adjacency(graph);
  if (kind == ModelKind::modality_knn) m.item_graph = build_item_knn_graph(feats, 2);

  std::vector<Triplet> batch;
  std::uniform_int_distribution<std::uint32_t> ui(0, M - 1), ii(0, N - 1);
  for (int k = 0; k < 10; ++k) {
    const auto u = ui(gen);
    const auto p = ii(gen);
    auto n = ii(gen);
    while (n == p) n = ii(gen);
    batch.push_back({u, p, n});
  }
  const double l2 = 0.05;
  ModelGradients g;
  bpr_loss(m, batch, l2, &g);
  const auto f = [&] { return bpr_loss(m, batch, l2); };

  Outcome out{std::string(to_string(kind)) + " seed " + std::to_string(seed)};
  const double h = 1e-6;
  detail::check_block(out, m.user_table.flat(), g.user.flat(), h, per_block, gen, f);
  detail::check_block(out, m.item_table.flat(), g.item.flat(), h, per_block, gen, f);
  for (std::size_t b = 0; b < g.projection.size(); ++b)
    detail::check_block(out, m.modalities[b].projection.flat(), g.projection[b].flat(), h, per_block, gen, f);
  for (std::size_t b = 0; b < g.preference.size(); ++b)
    detail::check_block(out, m.modalities[b].preference.flat(), g.preference[b].flat(), h, per_block, gen, f);
  return out;
}

// Cosine alignment loss of the rectifier's projection head.
inline Outcome check_projection(std::uint64_t seed, double rho, std::size_t per_block = 20) {
  using namespace trustrec;
  const std::size_t N = 12, d = 4, dm = 6;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Matrix<double> emb(N, d), x(N, dm);
  for (auto& v : emb.flat()) v = nd(gen);
  for (auto& v : x.flat()) v = nd(gen);
  const auto anchors = anchors_from_embeddings(emb);
  Projector p;
  p.weight = Matrix<double>(d, dm);
  p.bias.resize(d);
  for (auto& v : p.weight.flat()) v = nd(gen);
  for (auto& v : p.bias) v = 0.3 * nd(gen);
  std::vector<std::uint32_t> batch(N);
  for (std::uint32_t i = 0; i < N; ++i) batch[i] = i;

  ProjectorGrad g;
  projection_batch_loss(p, x, anchors, batch, rho, &g);
  const auto f = [&] { return projection_batch_loss(p, x, anchors, batch, rho); };
  Outcome out{"projection seed " + std::to_string(seed) + " rho " + std::to_string(rho)};
  detail::check_block(out, p.weight.flat(), g.weight.flat(), 1e-6, per_block, gen, f);
  detail::check_block(out, std::span<double>(p.bias), g.bias, 1e-6, per_block, gen, f);
  return out;
}

// The full battery: every model kind plus the projection head over `seeds`.
inline std::vector<Outcome> run_all(std::uint64_t first_seed, std::size_t seeds) {
  std::vector<Outcome> out;
  for (std::uint64_t s = first_seed; s < first_seed + seeds; ++s) {
    for (auto kind : {trustrec::ModelKind::lightgcn, trustrec::ModelKind::vbpr, trustrec::ModelKind::modality_knn})
      out.push_back(check_model(kind, s));
    out.push_back(check_projection(s, s % 2 ? 1.0 : 0.75));
  }
  return out;
}

}  // namespace gradcheck
