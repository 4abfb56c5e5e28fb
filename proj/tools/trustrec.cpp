// trustrec command-line front end. Exit codes: 0 ok, 2 configuration or
// usage error, 3 stage failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trustrec/backbone.hpp"
#include "trustrec/corpus.hpp"
#include "trustrec/corruptor.hpp"
#include "trustrec/edge_editor.hpp"
#include "trustrec/errors.hpp"
#include "trustrec/evaluator.hpp"
#include "trustrec/harness.hpp"
#include "trustrec/rectifier.hpp"

namespace fs = std::filesystem;
using namespace trustrec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

FeatureTable load_any_features(const fs::path& path, const std::string& modality, std::size_t items = 0) {
  return path.extension() == ".csv" ? load_features_csv(path, modality, items) : load_features(path, modality, items);
}

void save_any_features(const FeatureTable& table, const fs::path& path) {
  if (path.extension() == ".csv") save_features_csv(table, path);
  else save_features(table, path);
}

// "name=path" pairs, in the order given.
std::vector<FeatureTable> load_named_features(const std::vector<std::string>& specs, std::size_t items) {
  std::vector<FeatureTable> out;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--features expects name=path, got '" + spec + "'");
    out.push_back(load_any_features(spec.substr(eq + 1), spec.substr(0, eq), items));
  }
  return out;
}

std::pair<std::size_t, std::size_t> infer_shape(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::size_t m = 0, n = 0;
  std::uint64_t u = 0, i = 0;
  while (in >> u >> i) {
    m = std::max<std::size_t>(m, u + 1);
    n = std::max<std::size_t>(n, i + 1);
  }
  return {m, n};
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      ks.push_back(std::stoul(part));
    } catch (const std::exception&) {
      throw ConfigError("--ks expects comma-separated integers");
    }
  }
  if (ks.empty()) throw ConfigError("--ks must not be empty");
  return ks;
}

struct TrainArgs {
  std::string model = "vbpr";
  std::size_t dim = 64, layers = 2, knn_k = 10;
  TrainConfig cfg;
  std::vector<std::string> features;
  std::string supervision, propagation, plan, split_dir, out, history;
  bool verbose = false;
};

struct EvalArgs {
  std::string ckpt, split_dir, policy = "original_positives", ks = "10,20", out, propagation, supervision;
  std::vector<std::string> features;
  std::size_t knn_k = 10;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trustrec: multimodal recommendation under controlled corruption"};
  app.require_subcommand(1);

  // ingest
  std::string ingest_in, ingest_out;
  std::size_t min_core = 5;
  auto* ingest = app.add_subcommand("ingest", "k-core filter and index a raw user<TAB>item file");
  ingest->add_option("input", ingest_in, "raw interactions")->required();
  ingest->add_option("output", ingest_out, "output edge list; id maps go next to it")->required();
  ingest->add_option("--min-core", min_core, "minimum user and item degree")->capture_default_str();

  // split
  std::string split_in, split_out;
  std::uint64_t split_seed = 1;
  std::size_t split_users = 0, split_items = 0;
  auto* split = app.add_subcommand("split", "per-user 80/10/10 split of an edge list");
  split->add_option("input", split_in, "edge list")->required();
  split->add_option("output", split_out, "split directory")->required();
  split->add_option("--seed", split_seed)->capture_default_str();
  split->add_option("--users", split_users, "user count (default: max index + 1)");
  split->add_option("--items", split_items, "item count (default: max index + 1)");

  // synth
  SynthSpec synth_spec;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate the planted-latent benchmark");
  synth->add_option("output", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--users", synth_spec.num_users)->capture_default_str();
  synth->add_option("--items", synth_spec.num_items)->capture_default_str();
  synth->add_option("--latent-dim", synth_spec.latent_dim)->capture_default_str();
  synth->add_option("--edges-per-user", synth_spec.edges_per_user)->capture_default_str();
  synth->add_option("--noise", synth_spec.feature_noise_std)->capture_default_str();

  // corrupt-features
  double cf_eta = 0.0;
  std::string cf_modality = "v", cf_in, cf_out, cf_audit;
  std::uint64_t cf_seed = 1;
  auto* cf = app.add_subcommand("corrupt-features", "permute a random subset of feature rows");
  cf->add_option("--eta", cf_eta, "fraction of items to permute")->required();
  cf->add_option("--modality", cf_modality)->capture_default_str();
  cf->add_option("--seed", cf_seed)->capture_default_str();
  cf->add_option("--audit", cf_audit, "permutation audit TSV (default: <output>.perm.tsv)");
  cf->add_option("input", cf_in)->required();
  cf->add_option("output", cf_out)->required();

  // corrupt-edges
  double ce_eta = 0.0;
  std::uint64_t ce_seed = 1;
  std::string ce_split, ce_out, ce_audit;
  auto* ce = app.add_subcommand("corrupt-edges", "delete or add random training edges");
  ce->add_option("--eta", ce_eta, "negative deletes, positive adds")->required();
  ce->add_option("--seed", ce_seed)->capture_default_str();
  ce->add_option("--audit", ce_audit, "added/removed audit TSV (default: <output>.audit.tsv)");
  ce->add_option("split", ce_split, "split directory")->required();
  ce->add_option("output", ce_out, "corrupted training edge list")->required();

  // rectify
  RectifyConfig rc;
  std::string rho_rule = "fixed";
  std::optional<double> rc_eta;
  bool no_sinkhorn = false, no_small_loss = false;
  std::string rc_prov;
  std::uint64_t rc_seed = 1;
  std::vector<std::string> rc_paths;
  auto* rect = app.add_subcommand("rectify", "rectify feature tables against collaborative anchors");
  rect->add_option("--rho", rc.rho, "keep ratio for the fixed rule")->capture_default_str();
  rect->add_option("--rho-rule", rho_rule, "fixed | keep_clean | literal")->capture_default_str();
  rect->add_option("--eta-m", rc_eta, "known corruption ratio for the keep_clean/literal rules");
  rect->add_option("--topk", rc.topk)->capture_default_str();
  rect->add_option("--tau", rc.tau)->capture_default_str();
  rect->add_option("--lambda", rc.lambda)->capture_default_str();
  rect->add_option("--eps", rc.eps)->capture_default_str();
  rect->add_option("--sinkhorn-iters", rc.sinkhorn_iters)->capture_default_str();
  rect->add_option("--proj-epochs", rc.projection.epochs)->capture_default_str();
  rect->add_option("--proj-lr", rc.projection.lr)->capture_default_str();
  rect->add_option("--seed", rc_seed)->capture_default_str();
  rect->add_flag("--no-sinkhorn", no_sinkhorn, "row normalization instead of Sinkhorn");
  rect->add_flag("--no-small-loss", no_small_loss, "train the projection on every item");
  rect->add_option("--provenance", rc_prov, "provenance JSON (default: <first output>.provenance.json)");
  rect->add_option("paths", rc_paths, "anchors.ckpt in_1 .. in_n out_1 .. out_n")->required()->expected(3, -1);

  // edit-edges
  std::string ee_op = "prune", ee_target = "train", ee_prior, ee_split, ee_out, ee_edges;
  double ee_r = 0.05;
  std::size_t ee_ku = 10, ee_ki = 10;
  auto* ee = app.add_subcommand("edit-edges", "similarity-based pruning or completion plan");
  ee->add_option("--op", ee_op, "prune | complete")->capture_default_str();
  ee->add_option("--r", ee_r)->capture_default_str();
  ee->add_option("--target", ee_target, "train | graph | both")->capture_default_str();
  ee->add_option("--k-user", ee_ku)->capture_default_str();
  ee->add_option("--k-item", ee_ki)->capture_default_str();
  ee->add_option("--edges", ee_edges, "training edges to edit (default: the split's train)");
  ee->add_option("prior", ee_prior, "LightGCN checkpoint")->required();
  ee->add_option("split", ee_split)->required();
  ee->add_option("output", ee_out, "plan TSV")->required();

  // train
  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a scorer with BPR and early stopping");
  tr->add_option("--model", ta.model, "lightgcn | vbpr | modality_knn")->capture_default_str();
  tr->add_option("--dim", ta.dim)->capture_default_str();
  tr->add_option("--layers", ta.layers)->capture_default_str();
  tr->add_option("--knn-k", ta.knn_k)->capture_default_str();
  tr->add_option("--lr", ta.cfg.lr)->capture_default_str();
  tr->add_option("--l2", ta.cfg.l2)->capture_default_str();
  tr->add_option("--batch-size", ta.cfg.batch_size)->capture_default_str();
  tr->add_option("--max-epochs", ta.cfg.max_epochs)->capture_default_str();
  tr->add_option("--patience", ta.cfg.patience)->capture_default_str();
  tr->add_option("--seed", ta.cfg.seed)->capture_default_str();
  tr->add_option("--features", ta.features, "name=path, repeatable");
  tr->add_option("--supervision", ta.supervision, "edge list used for BPR triplets");
  tr->add_option("--propagation", ta.propagation, "edge list used for message passing");
  tr->add_option("--plan", ta.plan, "edit plan applied to the supervision/propagation edges");
  tr->add_option("--history", ta.history, "per-epoch CSV (default: <checkpoint>.history.csv)");
  tr->add_flag("--verbose", ta.verbose, "print per-epoch progress");
  tr->add_option("split", ta.split_dir)->required();
  tr->add_option("output", ta.out, "checkpoint")->required();

  // evaluate
  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "full-ranking Recall@K / NDCG@K on the test edges");
  ev->add_option("--policy", ea.policy, "original_positives | current_positives")->capture_default_str();
  ev->add_option("--ks", ea.ks)->capture_default_str();
  ev->add_option("--features", ea.features, "name=path, repeatable");
  ev->add_option("--knn-k", ea.knn_k)->capture_default_str();
  ev->add_option("--propagation", ea.propagation, "edge list used for message passing");
  ev->add_option("--supervision", ea.supervision, "current training positives");
  ev->add_option("--out", ea.out, "metrics JSON (default: stdout)");
  ev->add_option("checkpoint", ea.ckpt)->required();
  ev->add_option("split", ea.split_dir)->required();

  // sweep
  std::string sw_config, sw_axis, sw_out;
  std::vector<double> sw_values;
  std::vector<std::uint64_t> sw_seeds;
  auto* sw = app.add_subcommand("sweep", "grid sweep over one axis");
  sw->add_option("config", sw_config)->required();
  sw->add_option("--axis", sw_axis, "eta_m | eta_e | lambda | tau | rho | r");
  sw->add_option("--values", sw_values)->delimiter(',');
  sw->add_option("--seeds", sw_seeds)->delimiter(',');
  sw->add_option("--out", sw_out, "output directory");

  // report
  std::vector<std::string> rp_bundles;
  std::string rp_out;
  auto* rp = app.add_subcommand("report", "long-format table from experiment bundles");
  rp->add_option("bundles", rp_bundles)->required();
  rp->add_option("--out", rp_out, "output directory")->required();

  // run
  std::string run_config, run_out;
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "run one experiment from a JSON configuration");
  run->add_option("config", run_config)->required();
  run->add_option("--seed", run_seed);
  run->add_option("--out", run_out, "bundle directory (default: output.dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*ingest) {
      const auto result = ingest_interactions(ingest_in, min_core);
      write_edges(result.interactions, ingest_out);
      const fs::path out(ingest_out);
      write_id_maps(result, (out.parent_path() / out.stem()).string());
      std::cout << "users " << result.interactions.num_users() << " items " << result.interactions.num_items()
                << " interactions " << result.interactions.size() << '\n';
    } else if (*split) {
      auto [m, n] = infer_shape(split_in);
      if (split_users) m = split_users;
      if (split_items) n = split_items;
      const auto data = split_dataset(read_edges(split_in, m, n), {}, split_seed);
      write_split(data, split_out);
      std::cout << "train " << data.train().size() << " val " << data.val().size() << " test "
                << data.test().size() << '\n';
    } else if (*synth) {
      const auto data = synth_generate(synth_spec, synth_seed);
      write_split(data.split, synth_out);
      for (const auto& t : data.features) save_features(t, fs::path(synth_out) / (t.modality + ".mmf"));
      std::cout << "users " << data.split.num_users() << " items " << data.split.num_items() << '\n';
    } else if (*cf) {
      const auto in = load_any_features(cf_in, cf_modality);
      const auto permuted = permute_modality(in, cf_eta, cf_seed);
      save_any_features(permuted.table, cf_out);
      write_perm_audit(permuted.record, cf_audit.empty() ? cf_out + ".perm.tsv" : cf_audit);
      std::cout << "permuted " << permuted.record.subset.size() << " rows, changed "
                << permuted.record.changed_rows() << '\n';
    } else if (*ce) {
      const auto data = read_split(ce_split);
      const auto corrupted = corrupt_edges(data.train(), ce_eta, ce_seed);
      write_edges(corrupted.edges, ce_out);
      write_edge_audit(corrupted, ce_audit.empty() ? ce_out + ".audit.tsv" : ce_audit);
      std::cout << "added " << corrupted.added.size() << " removed " << corrupted.removed.size() << '\n';
    } else if (*rect) {
      if (rc_paths.size() % 2 == 0) throw ConfigError("rectify expects a checkpoint then matching input/output lists");
      const auto ckpt = load_checkpoint(rc_paths[0]);
      const auto* items = ckpt.find("avg.item");
      if (!items) throw DataError(rc_paths[0] + " holds no propagated item embeddings");
      const auto anchors = anchors_from_embeddings(items->cast<double>());
      const std::size_t n = (rc_paths.size() - 1) / 2;
      std::vector<FeatureTable> inputs;
      for (std::size_t k = 0; k < n; ++k)
        inputs.push_back(load_any_features(rc_paths[1 + k], fs::path(rc_paths[1 + k]).stem().string(),
                                           anchors.num_items()));
      rc.rho_rule = parse_rho_rule(rho_rule);
      rc.known_eta_m = rc_eta;
      rc.use_sinkhorn = !no_sinkhorn;
      rc.small_loss = !no_small_loss;
      rc.projection.seed = rc_seed;
      auto result = rectify_features(anchors, inputs, rc);
      for (std::size_t k = 0; k < n; ++k) save_any_features(result.tables[k], rc_paths[1 + n + k]);
      result.provenance["anchors"] = rc_paths[0];
      write_json(result.provenance, rc_prov.empty() ? rc_paths[1 + n] + ".provenance.json" : rc_prov);
    } else if (*ee) {
      const auto data = read_split(ee_split);
      const auto prior = prior_from_checkpoint(load_checkpoint(ee_prior), ee_prior);
      const auto edges =
          ee_edges.empty() ? data.train() : read_edges(ee_edges, data.num_users(), data.num_items());
      EditPlan plan = parse_edit_op(ee_op) == EditOp::prune
                          ? prune_edges(edges, prior, ee_r)
                          : complete_edges(edges, prior, ee_r, ee_ku, ee_ki, holdout_edges(data));
      plan.target = parse_edit_target(ee_target);
      write_edit_plan(plan, ee_out);
      std::cout << "removals " << plan.removals.size() << " additions " << plan.additions.size()
                << " dropped_holdout " << plan.dropped_holdout << '\n';
    } else if (*tr) {
      const auto data = read_split(ta.split_dir);
      const auto kind = parse_model_kind(ta.model);
      const auto features = load_named_features(ta.features, data.num_items());
      if (uses_features(kind) && features.empty()) throw ConfigError("--model " + ta.model + " needs --features");
      InteractionSet sup = ta.supervision.empty() ? data.train()
                                                  : read_edges(ta.supervision, data.num_users(), data.num_items());
      InteractionSet prop = ta.propagation.empty() ? sup
                                                   : read_edges(ta.propagation, data.num_users(), data.num_items());
      if (!ta.plan.empty()) {
        const auto plan = read_edit_plan(ta.plan);
        if (!ta.propagation.empty() && !(prop == sup))
          throw ConfigError("--plan expects a single base edge set; drop --propagation");
        auto edited = apply_edit(sup, plan);
        sup = std::move(edited.supervision);
        prop = std::move(edited.propagation);
      }
      auto model = init_embeddings<float>(kind, data.num_users(), data.num_items(), ta.dim, ta.layers, ta.cfg.seed);
      if (uses_features(kind)) attach_features(model, features, ta.cfg.seed);
      if (kind == ModelKind::modality_knn) model.item_graph = build_item_knn_graph(features, ta.knn_k);
      if (ta.verbose) ta.cfg.log = &std::cerr;
      const auto result = train(model, data, ta.cfg, sup, prop);
      save_checkpoint(model, ta.out);
      write_history_csv(result, ta.history.empty() ? ta.out + ".history.csv" : ta.history);
      std::cout << "best_epoch " << result.best_epoch << " val_recall@10 " << result.best_val_recall << '\n';
    } else if (*ev) {
      const auto data = read_split(ea.split_dir);
      const auto ckpt = load_checkpoint(ea.ckpt);
      const auto features = load_named_features(ea.features, data.num_items());
      const auto prop =
          ea.propagation.empty() ? data.train() : read_edges(ea.propagation, data.num_users(), data.num_items());
      const auto sup =
          ea.supervision.empty() ? data.train() : read_edges(ea.supervision, data.num_users(), data.num_items());
      const auto model = restore_model(ckpt, features, prop, ea.knn_k);
      const auto ks = parse_ks(ea.ks);
      const auto report = evaluate(model, data, ks, parse_filter_policy(ea.policy), &sup);
      if (ea.out.empty()) std::cout << report.to_json().dump(2) << '\n';
      else write_json(report.to_json(), ea.out);
    } else if (*sw) {
      auto config = load_config(sw_config);
      if (!sw_axis.empty()) config.sweep_axis = sw_axis;
      if (!sw_values.empty()) config.sweep_values = sw_values;
      if (!sw_seeds.empty()) config.seeds = sw_seeds;
      if (!sw_out.empty()) config.output_dir = sw_out;
      config.validate();
      if (config.sweep_axis.empty()) throw ConfigError("sweep needs an axis (sweep.axis or --axis)");
      if (config.sweep_values.empty()) throw ConfigError("sweep needs values (sweep.values or --values)");
      const auto result = sweep(config, config.sweep_axis, config.sweep_values, config.seeds);
      if (config.output_dir.empty()) write_cells_csv(result, "/dev/stdout");
      else std::cout << "wrote " << result.cells.size() << " cells to " << config.output_dir << '\n';
    } else if (*rp) {
      std::vector<fs::path> paths(rp_bundles.begin(), rp_bundles.end());
      const auto table = report(paths);
      write_long_csv(table, fs::path(rp_out) / "long.csv");
      write_report_summary_csv(table, fs::path(rp_out) / "summary.csv");
      std::cout << "rows " << table.rows.size() << '\n';
    } else if (*run) {
      auto config = load_config(run_config);
      if (run_seed) config.seed = *run_seed;
      if (!run_out.empty()) config.output_dir = run_out;
      const auto result = run_experiment(config);
      const BundleTags tags{"single", "none", 0.0, config.seed};
      if (!config.output_dir.empty()) write_bundle(result, config, tags, config.output_dir);
      std::cout << metrics_document(result, tags).dump(2) << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const StageError& e) {
    std::cerr << "stage failure " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kExitStage;
  }
  return kExitOk;
}
