#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "trustrec/errors.hpp"
#include "trustrec/harness.hpp"

using namespace trustrec;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "trustrec_test_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A tiny synthetic setup that trains in well under a second.
ExperimentConfig tiny(ModelKind kind = ModelKind::vbpr) {
  return ExperimentConfig::from_json(json{
      {"synth.num_users", 60},
      {"synth.num_items", 40},
      {"synth.latent_dim", 4},
      {"synth.edges_per_user", 8},
      {"synth.modality_dims", {{"t", 6}, {"v", 5}}},
      {"model.kind", std::string(to_string(kind))},
      {"model.dim", 8},
      {"train.lr", 0.01},
      {"train.max_epochs", 3},
      {"train.patience", 3},
      {"encoder.dim", 8},
      {"encoder.lr", 0.01},
      {"encoder.max_epochs", 3},
      {"mr.proj_epochs", 3},
      {"mr.topk", 5},
  });
}

}  // namespace

TEST_CASE("config: unknown keys and bad values are rejected") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"model.knd", "vbpr"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"model.kind", "transformer"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"corrupt.eta_m", "high"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::array()), ConfigError);
  auto c = tiny();
  c.eta_m = 0.7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny(ModelKind::lightgcn);
  c.mr_enabled = true;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.data_source = "files";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config: JSON round trip reproduces every field") {
  auto c = tiny();
  c.eta_m = 0.2;
  c.eta_e = -0.1;
  c.mr_enabled = true;
  c.mr.lambda = 0.3;
  c.edit_op = "prune";
  c.edit_target = EditTarget::graph_only;
  c.eval_ks = {5, 50};
  c.seeds = {4, 5};
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back == c);
  CHECK(back.to_json().dump() == c.to_json().dump());
  CHECK(back.mr.lambda == 0.3);
  CHECK(back.edit_target == EditTarget::graph_only);

  const auto dir = scratch("cfg");
  std::ofstream(dir / "c.json") << c.to_json().dump(2);
  CHECK(load_config(dir / "c.json") == c);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
}

TEST_CASE("run: mini fixture smoke test through the files source") {
  auto c = ExperimentConfig::from_json(json{
      {"data.source", "files"},
      {"data.interactions", std::string(TRUSTREC_FIXTURE_DIR) + "/mini.tsv"},
      {"data.min_core", 3},
      {"model.kind", "lightgcn"},
      {"model.dim", 8},
      {"train.max_epochs", 5},
      {"eval.ks", {5, 10}},
  });
  const auto r = run_experiment(c);
  CHECK(r.metrics.at_k.count(5) == 1);
  CHECK(r.metrics.at_k.count(10) == 1);
  CHECK(r.metrics.users > 0);
  CHECK(r.metrics.at_k.at(10).recall >= 0.0);
  CHECK(r.metrics.at_k.at(10).recall <= 1.0);
  CHECK_FALSE(r.training.history.empty());
}

TEST_CASE("run: same config gives byte-identical metric bundles") {
  auto c = tiny();
  c.eta_m = 0.2;
  c.mr_enabled = true;
  const auto a = run_experiment(c), b = run_experiment(c);
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  write_bundle(a, c, {}, d1);
  write_bundle(b, c, {}, d2);
  CHECK(slurp(d1 / "metrics.json") == slurp(d2 / "metrics.json"));
  CHECK(slurp(d1 / "history.csv") == slurp(d2 / "history.csv"));
  for (const char* f : {"metrics.json", "provenance.json", "config.json", "history.csv"}) CHECK(fs::exists(d1 / f));
  REQUIRE(a.mean_recovery().has_value());
  CHECK(a.recovery.size() == 2);
}

TEST_CASE("run: rectification with lambda 1 reproduces the base run") {
  auto base = tiny();
  base.eta_m = 0.3;
  auto rect = base;
  rect.mr_enabled = true;
  rect.mr.lambda = 1.0;
  const auto a = run_experiment(base), b = run_experiment(rect);
  CHECK(a.metrics == b.metrics);
  REQUIRE(b.mean_recovery().has_value());
  CHECK(*b.mean_recovery() == 0.0);
}

TEST_CASE("run: graph-only edits leave supervision unchanged") {
  auto c = tiny(ModelKind::lightgcn);
  c.edit_op = "prune";
  c.edit_target = EditTarget::graph_only;
  const auto r = run_experiment(c);
  const auto& p = r.provenance;
  REQUIRE(p.contains("edit"));
  const auto train_edges = p["corrupt"]["edges"]["train_edges"].get<std::size_t>();
  CHECK(p["train"]["supervision_edges"].get<std::size_t>() == train_edges);
  CHECK(p["train"]["propagation_edges"].get<std::size_t>() == train_edges - p["edit"]["removals"].get<std::size_t>());
  CHECK(p["edit"]["removals"].get<std::size_t>() > 0);
}

TEST_CASE("sweep: cells equal a plain loop over run_experiment") {
  auto c = tiny();
  const std::vector<double> values{0.0, 0.2};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto s = sweep(c, "eta_m", values, seeds);
  REQUIRE(s.cells.size() == 2 * 2 * 2);
  std::size_t k = 0;
  for (const double v : values)
    for (const auto seed : seeds)
      for (const auto& variant : s.variants) {
        const auto& cell = s.cells[k++];
        CHECK(cell.tags.variant == variant);
        CHECK(cell.tags.value == v);
        CHECK(cell.tags.seed == seed);
        CHECK(cell.metrics == run_experiment(cell_config(c, "eta_m", v, seed, variant)).metrics);
      }
  CHECK_THROWS_AS(sweep(c, "gamma", values, seeds), ConfigError);
}

TEST_CASE("sweep: 21-cell insight grid and report shape") {
  auto c = tiny(ModelKind::lightgcn);
  c.output_dir = scratch("insight").string();
  const std::vector<double> values{-0.15, 0.0, 0.15};
  const std::vector<std::uint64_t> seeds{1};
  const auto s = sweep(c, "eta_e", values, seeds);
  CHECK(s.variants.size() == 7);
  CHECK(s.cells.size() == 21);
  std::set<std::pair<std::string, double>> shape;
  for (const auto& cell : s.cells) shape.insert({cell.tags.variant, cell.tags.value});
  CHECK(shape.size() == 21);
  CHECK(fs::exists(fs::path(c.output_dir) / "cells.csv"));
  CHECK(fs::exists(fs::path(c.output_dir) / "summary.csv"));

  const auto table = report({fs::path(c.output_dir) / "cells"});
  CHECK(table.metrics.size() == 4);  // recall/ndcg at 10 and 20
  CHECK(table.rows.size() == 21 * table.metrics.size() * seeds.size());
  const auto out = scratch("report");
  write_long_csv(table, out / "long.csv");
  std::ifstream in(out / "long.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 1 + table.rows.size());
}

TEST_CASE("report: a bundle missing a metric is named in the error") {
  const auto dir = scratch("schema");
  const json good = {{"variant", "base"}, {"axis", "eta_m"}, {"value", 0.0}, {"seed", 1},
                     {"metrics", {{"10", {{"recall", 0.1}, {"ndcg", 0.2}}}, {"20", {{"recall", 0.3}, {"ndcg", 0.4}}}}}};
  json bad = good;
  bad["metrics"].erase("20");
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  std::ofstream(dir / "a" / "metrics.json") << good.dump();
  std::ofstream(dir / "b" / "metrics.json") << bad.dump();
  try {
    (void)report({dir});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find((dir / "b").string()) != std::string::npos);
  }
}

TEST_CASE("summary uses the sample standard deviation") {
  SweepResult r;
  r.axis = "eta_m";
  r.variants = {"base"};
  for (double x : {0.1, 0.2, 0.3}) {
    SweepCell cell;
    cell.tags = {"base", "eta_m", 0.0, 1};
    cell.metrics.at_k[10] = {x, x};
    r.cells.push_back(cell);
  }
  const auto rows = summarize(r);
  bool found = false;
  for (const auto& row : rows)
    if (row.metric == "recall@10") {
      found = true;
      CHECK(row.mean == doctest::Approx(0.2));
      CHECK(row.sd == doctest::Approx(0.1));
      CHECK(row.n == 3);
    }
  CHECK(found);
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
}

TEST_CASE("shipped configurations load and validate") {
  const auto dir = fs::path(TRUSTREC_FIXTURE_DIR) / ".." / ".." / "configs";
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()).validate());
    ++n;
  }
  CHECK(n >= 3);
}
