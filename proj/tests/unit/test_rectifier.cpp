#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles/oracles.hpp"
#include "oracles/sinkhorn_check.hpp"
#include "trustrec/errors.hpp"
#include "trustrec/rectifier.hpp"

using namespace trustrec;

namespace {

Matrix<double> gaussian(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Matrix<double> m(r, c);
  for (auto& x : m.flat()) x = nd(gen);
  return m;
}

// Features that are a fixed linear image of the anchors plus small noise.
FeatureTable aligned_features(const AnchorTable& anchors, std::size_t dm, double noise, std::uint64_t seed) {
  const auto map = gaussian(dm, anchors.dim(), seed);
  std::mt19937_64 gen(seed + 1);
  std::normal_distribution<double> nd;
  FeatureTable t{"t", Matrix<float>(anchors.num_items(), dm)};
  for (std::size_t i = 0; i < anchors.num_items(); ++i)
    for (std::size_t c = 0; c < dm; ++c)
      t.rows(i, c) = static_cast<float>(dot(map.row(c), anchors.rows.row(i)) + noise * nd(gen));
  return t;
}

}  // namespace

TEST_CASE("anchors are unit rows and zero rows are flagged") {
  auto emb = gaussian(5, 3, 1);
  for (std::size_t c = 0; c < 3; ++c) emb(2, c) = 0.0;
  const auto a = anchors_from_embeddings(emb);
  CHECK(a.zero_count == 1);
  CHECK(a.zero_row[2] == 1);
  for (std::size_t i = 0; i < 5; ++i) {
    const double n = std::sqrt(dot(a.rows.row(i), a.rows.row(i)));
    CHECK(n == doctest::Approx(i == 2 ? 0.0 : 1.0));
  }
}

TEST_CASE("small-loss selection") {
  const std::vector<double> l{0.9, 0.1, 0.5, 0.3};
  CHECK(select_small_loss(l, 0.5) == std::vector<std::size_t>{1, 3});
  CHECK(select_small_loss(l, 1.0) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(select_small_loss(l, 0.01) == std::vector<std::size_t>{1});
  const std::vector<double> tie{0.2, 0.2, 0.2};
  CHECK(select_small_loss(tie, 0.67) == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(select_small_loss(l, 0.0), ConfigError);
  CHECK_THROWS_AS(select_small_loss(l, 1.5), ConfigError);
}

TEST_CASE("keep-ratio rules") {
  RectifyConfig c;
  c.known_eta_m = 0.3;
  CHECK(resolve_keep_ratio(c) == doctest::Approx(0.65));
  c.rho_rule = RhoRule::literal;
  CHECK(resolve_keep_ratio(c) == doctest::Approx(0.35));
  c.rho_rule = RhoRule::fixed;
  c.rho = 0.8;
  CHECK(resolve_keep_ratio(c) == 0.8);
  c.small_loss = false;
  CHECK(resolve_keep_ratio(c) == 1.0);
  CHECK(parse_rho_rule("keep_clean") == RhoRule::keep_clean);
  CHECK_THROWS_AS(parse_rho_rule("auto"), ConfigError);
}

TEST_CASE("projection training aligns linearly related features") {
  const auto anchors = anchors_from_embeddings(gaussian(300, 8, 4));
  const auto feats = aligned_features(anchors, 12, 0.01, 5);
  ProjectionConfig pc;
  pc.epochs = 60;
  const auto p = train_projection(feats, anchors, 1.0, pc);
  REQUIRE(p.full_loss_log.size() == 60);
  CHECK(p.full_loss_log.back() < 0.1);
  CHECK(p.full_loss_log.back() < p.full_loss_log.front());
  const auto z = project_normalized(p, feats);
  for (std::size_t i = 0; i < 300; i += 37) CHECK(std::sqrt(dot(z.row(i), z.row(i))) == doctest::Approx(1.0));
}

TEST_CASE("affinity equals a brute-force top-K with diagonal, N=6 K=2") {
  const auto anchors = anchors_from_embeddings(gaussian(6, 3, 9));
  auto z = gaussian(6, 3, 10);
  for (std::size_t i = 0; i < 6; ++i) {
    const double n = std::sqrt(dot(z.row(i), z.row(i)));
    for (auto& x : z.row(i)) x /= n;
  }
  const double tau = 0.1;
  const auto aff = build_affinity(anchors, z, 2, tau);
  const auto got = aff.values.to_dense();
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<std::pair<double, std::size_t>> s;
    for (std::size_t j = 0; j < 6; ++j) s.emplace_back(-dot(anchors.rows.row(i), z.row(j)), j);
    std::sort(s.begin(), s.end());
    std::vector<char> keep(6, 0);
    keep[s[0].second] = keep[s[1].second] = keep[i] = 1;
    for (std::size_t j = 0; j < 6; ++j) {
      const double want = keep[j] ? std::exp(dot(anchors.rows.row(i), z.row(j)) / tau) : 0.0;
      CHECK(got(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(build_affinity(anchors, z, 0, tau), ConfigError);
  CHECK_THROWS_AS(build_affinity(anchors, z, 2, 0.0), ConfigError);
}

TEST_CASE("sinkhorn: diagonal and permutation inputs map to themselves") {
  CHECK(sinkhorn_check::permutation_error(40, 1e-12, 3) <= 1e-10);
}

TEST_CASE("sinkhorn: 2x2 closed form and pattern preservation") {
  const auto a = sinkhorn_check::from_dense({{1, 2}, {3, 4}});
  const auto m = sinkhorn(a, 1e-12, 500, 1e-14);
  // The cross ratio p11 p22 / (p12 p21) = 2/3 is invariant under scaling.
  const double r = std::sqrt(2.0 / 3.0), p = r / (1 + r);
  const auto d = m.values.to_dense();
  CHECK(d(0, 0) == doctest::Approx(p).epsilon(1e-9));
  CHECK(d(1, 1) == doctest::Approx(p).epsilon(1e-9));
  CHECK(d(0, 1) == doctest::Approx(1 - p).epsilon(1e-9));

  const auto sp = sinkhorn_check::from_dense({{1, 0, 2}, {0, 3, 1}, {2, 1, 0}});
  const auto ms = sinkhorn(sp, 1e-12, 200, 1e-12);
  CHECK(ms.values.row_ptr == sp.row_ptr);
  CHECK(ms.values.col == sp.col);
  CHECK(ms.final_deviation < 1e-9);
  CHECK(ms.method == "sinkhorn");
  CHECK_THROWS_AS(sinkhorn(sp, 0.0), ConfigError);
}

TEST_CASE("sinkhorn: dense matrices agree with the alternating-normalization oracle") {
  const auto r = sinkhorn_check::dense_vs_oracle(20, 30, 1e-3, 200, 11);
  CHECK(r.matrices == 20);
  CHECK(r.worst_deviation <= 1e-3);
  CHECK(r.worst_entry_gap <= 1e-6);
}

TEST_CASE("sinkhorn: sparse top-K never ends worse than the row-normalized start") {
  const auto r = sinkhorn_check::sparse_topk(10, 12);
  CHECK(r.violations == 0);
}

TEST_CASE("row normalization ablation") {
  SparseAffinity aff{sinkhorn_check::from_dense({{1, 3}, {2, 2}}), 0.1, 2};
  const auto m = row_normalize(aff);
  for (double s : m.values.row_sums()) CHECK(s == doctest::Approx(1.0));
  CHECK(m.method == "row_norm");
  CHECK(m.final_deviation == doctest::Approx(0.25));
}

TEST_CASE("aggregation: lambda 1, identity matching and a hand example") {
  FeatureTable x{"t", Matrix<float>(2, 2)};
  x.rows(0, 0) = 1; x.rows(0, 1) = 0;
  x.rows(1, 0) = 0; x.rows(1, 1) = 2;
  SoftMatching p;
  p.values = sinkhorn_check::from_dense({{0.25, 0.75}, {0.5, 0.5}});
  CHECK(rectify(x, p, 1.0) == x);

  SoftMatching id;
  id.values = sinkhorn_check::from_dense({{1, 0}, {0, 1}});
  CHECK(rectify(x, id, 0.3) == x);

  const auto y = rectify(x, p, 0.5);
  CHECK(y.rows(0, 0) == doctest::Approx(0.5 * 1 + 0.5 * 0.25));
  CHECK(y.rows(0, 1) == doctest::Approx(0.5 * 0 + 0.5 * 1.5));
  CHECK(y.rows(1, 0) == doctest::Approx(0.5 * 0 + 0.5 * 0.5));
  CHECK(y.rows(1, 1) == doctest::Approx(0.5 * 2 + 0.5 * 1.0));
  CHECK_THROWS_AS(rectify(x, p, 1.5), ConfigError);
}

TEST_CASE("recovery rate compares cosine to the clean row") {
  FeatureTable clean{"t", Matrix<float>(3, 2)}, corrupted = clean, fixed = clean;
  clean.rows(0, 0) = 1; clean.rows(1, 1) = 1; clean.rows(2, 0) = 1;
  corrupted.rows(0, 1) = 1; corrupted.rows(1, 0) = 1; corrupted.rows(2, 0) = 1;
  fixed.rows(0, 0) = 1; fixed.rows(0, 1) = 0.2f;  // closer than corrupted
  fixed.rows(1, 0) = 1;                            // unchanged
  fixed.rows(2, 0) = 1;
  const std::uint32_t items[] = {0, 1};
  CHECK(recovery_rate(corrupted, fixed, clean, items) == 0.5);
  CHECK(recovery_rate(corrupted, fixed, clean, std::span<const std::uint32_t>()) == 1.0);
}

TEST_CASE("rectification recovers permuted rows and records provenance") {
  const std::size_t N = 200;
  const auto anchors = anchors_from_embeddings(gaussian(N, 8, 21));
  const auto clean = aligned_features(anchors, 10, 0.01, 22);
  // Swap 20 disjoint pairs of rows.
  auto corrupted = clean;
  std::vector<std::uint32_t> changed;
  for (std::uint32_t k = 0; k < 20; ++k) {
    const std::uint32_t a = 2 * k, b = 2 * k + 1;
    for (std::size_t c = 0; c < 10; ++c) std::swap(corrupted.rows(a, c), corrupted.rows(b, c));
    changed.push_back(a);
    changed.push_back(b);
  }
  RectifyConfig cfg;
  cfg.known_eta_m = 0.2;
  cfg.projection.epochs = 40;
  const std::vector<FeatureTable> in{corrupted};
  const auto full = rectify_features(anchors, in, cfg);
  CHECK(recovery_rate(corrupted, full.tables[0], clean, changed) >= 0.9);
  CHECK(full.provenance["matching"] == "sinkhorn");
  CHECK(full.provenance["rho_rule"] == "keep_clean");
  CHECK(full.provenance["keep_ratio"].get<double>() == doctest::Approx(0.75));
  CHECK(full.provenance["lambda"].get<double>() == 0.5);
  CHECK(full.provenance["topk"].get<std::size_t>() == 20);
  CHECK(full.provenance["modalities"]["t"]["final_deviation"].get<double>() <=
        full.provenance["modalities"]["t"]["initial_deviation"].get<double>());

  auto no_sink = cfg;
  no_sink.use_sinkhorn = false;
  auto no_sl = cfg;
  no_sl.small_loss = false;
  const auto a = rectify_features(anchors, in, no_sink).provenance;
  const auto b = rectify_features(anchors, in, no_sl).provenance;
  CHECK(a["matching"] == "row_norm");
  CHECK(b["rho_rule"] == "disabled");
  CHECK(b["keep_ratio"].get<double>() == 1.0);
  CHECK(a != full.provenance);
  CHECK(b != full.provenance);

  auto keep = cfg;
  keep.lambda = 1.0;
  CHECK(rectify_features(anchors, in, keep).tables[0] == corrupted);
}
