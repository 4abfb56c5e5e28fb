#include "trustrec/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "trustrec/corruptor.hpp"
#include "trustrec/errors.hpp"
#include "trustrec/rng.hpp"

namespace trustrec {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

struct KeySpec {
  const char* name;
  std::function<json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const json&)> set;
};

std::size_t as_size(const json& v) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ConfigError("expected a non-negative integer");
  return v.get<std::size_t>();
}

double as_double(const json& v) {
  if (!v.is_number()) throw ConfigError("expected a number");
  return v.get<double>();
}

bool as_bool(const json& v) {
  if (!v.is_boolean()) throw ConfigError("expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v) {
  if (!v.is_string()) throw ConfigError("expected a string");
  return v.get<std::string>();
}

template <typename T, typename F>
std::vector<T> as_array(const json& v, F convert) {
  if (!v.is_array()) throw ConfigError("expected an array");
  std::vector<T> out;
  for (const auto& e : v) out.push_back(convert(e));
  return out;
}

#define TR_SIZE(key, field) \
  KeySpec { key, [](const ExperimentConfig& c) { return json(c.field); }, [](ExperimentConfig& c, const json& v) { c.field = as_size(v); } }
#define TR_DOUBLE(key, field) \
  KeySpec { key, [](const ExperimentConfig& c) { return json(c.field); }, [](ExperimentConfig& c, const json& v) { c.field = as_double(v); } }
#define TR_BOOL(key, field) \
  KeySpec { key, [](const ExperimentConfig& c) { return json(c.field); }, [](ExperimentConfig& c, const json& v) { c.field = as_bool(v); } }
#define TR_STRING(key, field) \
  KeySpec { key, [](const ExperimentConfig& c) { return json(c.field); }, [](ExperimentConfig& c, const json& v) { c.field = as_string(v); } }

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      TR_STRING("data.source", data_source),
      TR_STRING("data.interactions", data_interactions),
      TR_SIZE("data.min_core", data_min_core),
      TR_STRING("data.split_dir", data_split_dir),
      {"data.features", [](const ExperimentConfig& c) { return json(c.data_features); },
       [](ExperimentConfig& c, const json& v) {
         if (!v.is_object()) throw ConfigError("expected an object of modality -> path");
         c.data_features.clear();
         for (const auto& [k, p] : v.items()) c.data_features[k] = as_string(p);
       }},
      TR_SIZE("synth.num_users", synth.num_users),
      TR_SIZE("synth.num_items", synth.num_items),
      TR_SIZE("synth.latent_dim", synth.latent_dim),
      TR_SIZE("synth.edges_per_user", synth.edges_per_user),
      TR_DOUBLE("synth.noise_std", synth.feature_noise_std),
      {"synth.modality_dims", [](const ExperimentConfig& c) { return json(c.synth.modality_dims); },
       [](ExperimentConfig& c, const json& v) {
         if (!v.is_object()) throw ConfigError("expected an object of modality -> dimension");
         c.synth.modality_dims.clear();
         for (const auto& [k, d] : v.items()) c.synth.modality_dims[k] = as_size(d);
       }},
      {"model.kind", [](const ExperimentConfig& c) { return json(std::string(to_string(c.model_kind))); },
       [](ExperimentConfig& c, const json& v) { c.model_kind = parse_model_kind(as_string(v)); }},
      TR_SIZE("model.dim", model_dim),
      TR_SIZE("model.layers", model_layers),
      TR_SIZE("model.knn_k", model_knn_k),
      TR_DOUBLE("train.lr", train.lr),
      TR_DOUBLE("train.l2", train.l2),
      TR_SIZE("train.batch_size", train.batch_size),
      TR_SIZE("train.eval_batch_size", train.eval_batch_size),
      TR_SIZE("train.max_epochs", train.max_epochs),
      TR_SIZE("train.patience", train.patience),
      TR_SIZE("encoder.dim", encoder.dim),
      TR_SIZE("encoder.layers", encoder.layers),
      TR_DOUBLE("encoder.lr", encoder.lr),
      TR_DOUBLE("encoder.l2", encoder.l2),
      TR_SIZE("encoder.batch_size", encoder.batch_size),
      TR_SIZE("encoder.max_epochs", encoder.max_epochs),
      TR_SIZE("encoder.patience", encoder.patience),
      TR_BOOL("mr.enabled", mr_enabled),
      {"mr.rho_rule", [](const ExperimentConfig& c) { return json(std::string(to_string(c.mr.rho_rule))); },
       [](ExperimentConfig& c, const json& v) { c.mr.rho_rule = parse_rho_rule(as_string(v)); }},
      TR_DOUBLE("mr.rho", mr.rho),
      TR_SIZE("mr.topk", mr.topk),
      TR_DOUBLE("mr.tau", mr.tau),
      TR_DOUBLE("mr.lambda", mr.lambda),
      TR_DOUBLE("mr.eps", mr.eps),
      TR_SIZE("mr.sinkhorn_iters", mr.sinkhorn_iters),
      TR_DOUBLE("mr.sinkhorn_tol", mr.sinkhorn_tol),
      TR_BOOL("mr.use_sinkhorn", mr.use_sinkhorn),
      TR_BOOL("mr.small_loss", mr.small_loss),
      TR_SIZE("mr.proj_epochs", mr.projection.epochs),
      TR_SIZE("mr.proj_batch_size", mr.projection.batch_size),
      TR_DOUBLE("mr.proj_lr", mr.projection.lr),
      TR_DOUBLE("corrupt.eta_m", eta_m),
      TR_DOUBLE("corrupt.eta_e", eta_e),
      {"corrupt.modalities", [](const ExperimentConfig& c) { return json(c.corrupt_modalities); },
       [](ExperimentConfig& c, const json& v) { c.corrupt_modalities = as_array<std::string>(v, as_string); }},
      TR_STRING("edit.op", edit_op),
      TR_DOUBLE("edit.r", edit_r),
      {"edit.target", [](const ExperimentConfig& c) { return json(std::string(to_string(c.edit_target))); },
       [](ExperimentConfig& c, const json& v) { c.edit_target = parse_edit_target(as_string(v)); }},
      TR_SIZE("edit.k_user", edit_k_user),
      TR_SIZE("edit.k_item", edit_k_item),
      {"eval.ks", [](const ExperimentConfig& c) { return json(c.eval_ks); },
       [](ExperimentConfig& c, const json& v) { c.eval_ks = as_array<std::size_t>(v, as_size); }},
      {"eval.filter_policy", [](const ExperimentConfig& c) { return json(std::string(to_string(c.eval_policy))); },
       [](ExperimentConfig& c, const json& v) { c.eval_policy = parse_filter_policy(as_string(v)); }},
      TR_SIZE("seed", seed),
      {"seeds", [](const ExperimentConfig& c) { return json(c.seeds); },
       [](ExperimentConfig& c, const json& v) {
         c.seeds.clear();
         for (const auto s : as_array<std::size_t>(v, as_size)) c.seeds.push_back(s);
       }},
      TR_STRING("output.dir", output_dir),
      TR_STRING("sweep.axis", sweep_axis),
      {"sweep.values", [](const ExperimentConfig& c) { return json(c.sweep_values); },
       [](ExperimentConfig& c, const json& v) { c.sweep_values = as_array<double>(v, as_double); }},
      TR_STRING("sweep.variants", sweep_variants),
  };
  return specs;
}

#undef TR_SIZE
#undef TR_DOUBLE
#undef TR_BOOL
#undef TR_STRING

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"eta_m", "eta_e", "lambda", "tau", "rho", "r"};
  return axes;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  ExperimentConfig c;
  const auto& specs = key_specs();
  for (const auto& [key, value] : j.items()) {
    const auto it = std::find_if(specs.begin(), specs.end(), [&](const KeySpec& s) { return key == s.name; });
    if (it == specs.end()) throw ConfigError("unknown configuration key '" + key + "'");
    try {
      it->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError("configuration key '" + key + "': " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError("configuration key '" + key + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError("configuration key '" + key + "': " + e.what());
    }
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json j = json::object();
  for (const auto& spec : key_specs()) j[spec.name] = spec.get(*this);
  return j;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(data_source == "synth" || data_source == "files", "data.source must be 'synth' or 'files'");
  if (data_source == "files")
    require(!data_interactions.empty() || !data_split_dir.empty(),
            "data.source=files needs data.interactions or data.split_dir");
  if (data_source == "synth") {
    require(synth.num_users > 0 && synth.num_items > 0 && synth.latent_dim > 0, "synth sizes must be positive");
    require(synth.edges_per_user > 0 && synth.edges_per_user < synth.num_items,
            "synth.edges_per_user must lie in [1, num_items)");
    require(synth.feature_noise_std >= 0, "synth.noise_std must be >= 0");
  }
  require(model_dim > 0, "model.dim must be positive");
  require(model_knn_k > 0, "model.knn_k must be positive");
  require(train.lr > 0 && train.l2 >= 0, "train.lr must be positive and train.l2 non-negative");
  require(train.batch_size > 0 && train.eval_batch_size > 0 && train.max_epochs > 0,
          "train batch sizes and max_epochs must be positive");
  require(encoder.dim > 0 && encoder.lr > 0 && encoder.batch_size > 0 && encoder.max_epochs > 0,
          "encoder settings must be positive");
  require(eta_m >= 0 && eta_m <= 0.5, "corrupt.eta_m must lie in [0, 0.5]");
  require(std::abs(eta_e) <= 0.5, "corrupt.eta_e must lie in [-0.5, 0.5]");
  if (mr_enabled) {
    require(uses_features(model_kind), "mr.enabled needs a backbone that consumes features");
    require(mr.lambda >= 0 && mr.lambda <= 1, "mr.lambda must lie in [0, 1]");
    require(mr.tau > 0, "mr.tau must be positive");
    require(mr.topk > 0, "mr.topk must be positive");
    require(mr.rho > 0 && mr.rho <= 1, "mr.rho must lie in (0, 1]");
    require(mr.eps > 0 && mr.sinkhorn_iters > 0, "mr.eps and mr.sinkhorn_iters must be positive");
    require(mr.projection.epochs > 0 && mr.projection.batch_size > 0 && mr.projection.lr > 0,
            "mr projection settings must be positive");
  }
  require(edit_op == "none" || edit_op == "prune" || edit_op == "complete",
          "edit.op must be none, prune or complete");
  if (edit_op != "none") {
    require(edit_r >= 0 && edit_r < 1, "edit.r must lie in [0, 1)");
    require(edit_k_user > 0 && edit_k_item > 0, "edit.k_user and edit.k_item must be positive");
  }
  require(!eval_ks.empty(), "eval.ks must not be empty");
  for (const auto k : eval_ks) require(k > 0, "eval.ks entries must be positive");
  require(!seeds.empty(), "seeds must not be empty");
  require(sweep_variants == "auto" || sweep_variants == "mr" || sweep_variants == "edit",
          "sweep.variants must be auto, mr or edit");
  if (!sweep_axis.empty())
    require(std::find(sweep_axes().begin(), sweep_axes().end(), sweep_axis) != sweep_axes().end(),
            "sweep.axis must be one of eta_m, eta_e, lambda, tau, rho, r");
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto config = ExperimentConfig::from_json(j);
  config.validate();
  return config;
}

std::optional<double> ExperimentResult::mean_recovery() const {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : recovery) {
    if (r.corrupted_items == 0) continue;
    sum += r.rate;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Cache

namespace {

struct LoadedData {
  std::shared_ptr<const SplitDataset> split;
  std::vector<FeatureTable> features;
  json summary;
};

struct Encoder {
  AnchorTable anchors;
  CollabPrior prior;
  TrainResult training;
};

json section(const json& config, std::initializer_list<std::string_view> prefixes) {
  json out = json::object();
  for (const auto& [k, v] : config.items())
    for (const auto p : prefixes)
      if (k.rfind(p, 0) == 0) out[k] = v;
  return out;
}

}  // namespace

struct ExperimentCache::Impl {
  std::map<std::string, std::shared_ptr<const LoadedData>> data;
  std::map<std::string, std::shared_ptr<const Encoder>> encoders;
  std::map<std::string, std::shared_ptr<const ExperimentResult>> results;
};

ExperimentCache::ExperimentCache() : impl_(std::make_unique<Impl>()) {}
ExperimentCache::~ExperimentCache() = default;

namespace {

std::vector<FeatureTable> load_feature_files(const std::map<std::string, std::string>& files, std::size_t items) {
  std::vector<FeatureTable> out;
  for (const auto& [modality, path] : files) {
    const fs::path p(path);
    out.push_back(p.extension() == ".csv" ? load_features_csv(p, modality, items) : load_features(p, modality, items));
  }
  return out;
}

std::string data_key(const ExperimentConfig& c) {
  json key = section(c.to_json(), {"data.", "synth."});
  const bool seeded = c.data_source == "synth" || c.data_split_dir.empty();
  key["seed"] = seeded ? c.seed : 0;
  return key.dump();
}

std::shared_ptr<const LoadedData> load_data(const ExperimentConfig& c, ExperimentCache::Impl& cache) {
  const auto key = data_key(c);
  if (const auto it = cache.data.find(key); it != cache.data.end()) return it->second;
  auto data = std::make_shared<LoadedData>();
  if (c.data_source == "synth") {
    auto synth = synth_generate(c.synth, c.seed);
    data->split = std::make_shared<const SplitDataset>(std::move(synth.split));
    data->features = std::move(synth.features);
    data->summary["source"] = "synth";
  } else if (!c.data_split_dir.empty()) {
    data->split = std::make_shared<const SplitDataset>(read_split(c.data_split_dir));
    data->features = load_feature_files(c.data_features, data->split->num_items());
    data->summary["source"] = c.data_split_dir;
  } else {
    const auto ingested = ingest_interactions(c.data_interactions, c.data_min_core);
    data->split = std::make_shared<const SplitDataset>(split_dataset(ingested.interactions, {}, c.seed));
    data->features = load_feature_files(c.data_features, data->split->num_items());
    data->summary["source"] = c.data_interactions;
    data->summary["min_core"] = c.data_min_core;
  }
  const auto& s = *data->split;
  data->summary["users"] = s.num_users();
  data->summary["items"] = s.num_items();
  data->summary["train"] = s.train().size();
  data->summary["val"] = s.val().size();
  data->summary["test"] = s.test().size();
  cache.data[key] = data;
  return data;
}

TrainConfig encoder_train_config(const ExperimentConfig& c) {
  TrainConfig t;
  t.lr = c.encoder.lr;
  t.l2 = c.encoder.l2;
  t.batch_size = c.encoder.batch_size;
  t.eval_batch_size = c.train.eval_batch_size;
  t.max_epochs = c.encoder.max_epochs;
  t.patience = c.encoder.patience;
  t.seed = derive_stream("encoder", c.seed)();
  return t;
}

std::shared_ptr<const Encoder> load_encoder(const ExperimentConfig& c, const SplitDataset& split,
                                            const InteractionSet& edges, ExperimentCache::Impl& cache) {
  json key = section(c.to_json(), {"encoder."});
  key["data"] = data_key(c);
  key["eta_e"] = c.eta_e;
  key["seed"] = c.seed;
  key["eval_batch"] = c.train.eval_batch_size;
  const auto k = key.dump();
  if (const auto it = cache.encoders.find(k); it != cache.encoders.end()) return it->second;

  const auto tc = encoder_train_config(c);
  auto model = init_embeddings<float>(ModelKind::lightgcn, split.num_users(), split.num_items(), c.encoder.dim,
                                      c.encoder.layers, tc.seed);
  auto enc = std::make_shared<Encoder>();
  enc->training = train(model, split, tc, edges, edges);
  enc->anchors = anchors_from_model(model);
  enc->prior = prior_from_model(model, "encoder:seed=" + std::to_string(c.seed));
  cache.encoders[k] = enc;
  return enc;
}

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

json training_summary(const TrainResult& r) {
  return {{"epochs_run", r.history.size()}, {"best_epoch", r.best_epoch}, {"best_val_recall@10", r.best_val_recall}};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, ExperimentCache* cache) {
  config.validate();
  ExperimentCache local;
  auto& store = (cache ? *cache : local).impl();
  ExperimentResult result;
  auto& prov = result.provenance;

  const auto data = stage("data", [&] { return load_data(config, store); });
  const SplitDataset& split = *data->split;
  prov["data"] = data->summary;

  if (uses_features(config.model_kind) && data->features.empty())
    throw ConfigError("model.kind=" + std::string(to_string(config.model_kind)) + " needs feature tables");
  for (const auto& m : config.corrupt_modalities)
    if (std::none_of(data->features.begin(), data->features.end(), [&](const auto& t) { return t.modality == m; }))
      throw ConfigError("corrupt.modalities names unknown modality '" + m + "'");

  // Corruption.
  std::vector<FeatureTable> features = data->features;
  std::vector<std::vector<std::uint32_t>> corrupted_items(features.size());
  const auto edges = stage("corrupt", [&] {
    for (std::size_t k = 0; k < features.size(); ++k) {
      const auto& list = config.corrupt_modalities;
      if (!list.empty() && std::find(list.begin(), list.end(), features[k].modality) == list.end()) continue;
      if (config.eta_m <= 0) continue;
      auto permuted = permute_modality(features[k], config.eta_m, config.seed);
      const auto& rec = permuted.record;
      for (std::size_t p = 0; p < rec.subset.size(); ++p)
        if (rec.subset[p] != rec.source[p]) corrupted_items[k].push_back(rec.subset[p]);
      prov["corrupt"]["features"][rec.modality] = {{"eta_m", config.eta_m},
                                                   {"subset", rec.subset.size()},
                                                   {"changed_rows", rec.changed_rows()}};
      features[k] = std::move(permuted.table);
    }
    auto corrupted = corrupt_edges(split.train(), config.eta_e, config.seed);
    prov["corrupt"]["edges"] = {{"eta_e", config.eta_e},
                                {"added", corrupted.added.size()},
                                {"removed", corrupted.removed.size()},
                                {"train_edges", corrupted.edges.size()}};
    return std::move(corrupted.edges);
  });

  std::shared_ptr<const Encoder> encoder;
  if (config.mr_enabled || config.edit_op != "none") {
    encoder = stage("encoder", [&] { return load_encoder(config, split, edges, store); });
    prov["encoder"] = training_summary(encoder->training);
    prov["encoder"]["dim"] = config.encoder.dim;
    prov["encoder"]["layers"] = config.encoder.layers;
  }

  if (config.mr_enabled) {
    stage("rectify", [&] {
      RectifyConfig rc = config.mr;
      rc.projection.seed = config.seed;
      rc.known_eta_m = config.eta_m;
      auto rect = rectify_features(encoder->anchors, features, rc);
      for (std::size_t k = 0; k < features.size(); ++k) {
        if (corrupted_items[k].empty()) continue;
        const double rate = recovery_rate(features[k], rect.tables[k], data->features[k], corrupted_items[k]);
        result.recovery.push_back({features[k].modality, corrupted_items[k].size(), rate});
        rect.provenance["modalities"][features[k].modality]["recovery"] = rate;
      }
      features = std::move(rect.tables);
      prov["rectify"] = std::move(rect.provenance);
    });
  }

  InteractionSet supervision = edges, propagation = edges;
  if (config.edit_op != "none") {
    stage("edit", [&] {
      EditPlan plan = config.edit_op == "prune"
                          ? prune_edges(edges, encoder->prior, config.edit_r)
                          : complete_edges(edges, encoder->prior, config.edit_r, config.edit_k_user,
                                           config.edit_k_item, holdout_edges(split));
      plan.target = config.edit_target;
      auto edited = apply_edit(edges, plan);
      supervision = std::move(edited.supervision);
      propagation = std::move(edited.propagation);
      prov["edit"] = {{"op", config.edit_op},
                      {"target", to_string(plan.target)},
                      {"r", plan.ratio},
                      {"k_user", plan.k_user},
                      {"k_item", plan.k_item},
                      {"removals", plan.removals.size()},
                      {"additions", plan.additions.size()},
                      {"dropped_holdout", plan.dropped_holdout},
                      {"prior", plan.prior_id}};
    });
  }

  auto model = stage("train", [&] {
    auto m = init_embeddings<float>(config.model_kind, split.num_users(), split.num_items(), config.model_dim,
                                    config.model_layers, config.seed);
    if (uses_features(config.model_kind)) attach_features(m, features, config.seed);
    if (config.model_kind == ModelKind::modality_knn) m.item_graph = build_item_knn_graph(features, config.model_knn_k);
    TrainConfig tc = config.train;
    tc.seed = config.seed;
    tc.log = nullptr;
    result.training = train(m, split, tc, supervision, propagation);
    return m;
  });
  prov["train"] = training_summary(result.training);
  prov["train"]["supervision_edges"] = supervision.size();
  prov["train"]["propagation_edges"] = propagation.size();

  result.metrics = stage("evaluate", [&] {
    return evaluate(model, split, config.eval_ks, config.eval_policy, &supervision, config.train.eval_batch_size);
  });
  return result;
}

// ---------------------------------------------------------------------------
// Bundles

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

json metrics_document(const ExperimentResult& result, const BundleTags& tags) {
  json doc = {{"variant", tags.variant},
              {"axis", tags.axis},
              {"value", tags.value},
              {"seed", tags.seed},
              {"metrics", result.metrics.to_json()}};
  if (const auto r = result.mean_recovery()) doc["recovery"] = *r;
  return doc;
}

void write_bundle(const ExperimentResult& result, const ExperimentConfig& config, const BundleTags& tags,
                  const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "metrics.json", metrics_document(result, tags).dump(2) + "\n");
  write_text(dir / "provenance.json", result.provenance.dump(2) + "\n");
  write_text(dir / "config.json", config.to_json().dump(2) + "\n");
  write_history_csv(result.training, dir / "history.csv");
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<std::string> sweep_variant_names(const ExperimentConfig& config, const std::string& axis) {
  std::string mode = config.sweep_variants;
  if (mode == "auto") mode = (axis == "eta_e" || axis == "r") ? "edit" : "mr";
  if (mode == "mr") return {"base", "rect"};
  std::vector<std::string> out{"base"};
  for (const char* op : {"add", "prune"})
    for (const char* target : {"train", "graph", "both"}) out.push_back(std::string(op) + "-" + target);
  return out;
}

ExperimentConfig cell_config(const ExperimentConfig& base, const std::string& axis, double value, std::uint64_t seed,
                             const std::string& variant) {
  ExperimentConfig c = base;
  c.seed = seed;
  if (axis == "eta_m") c.eta_m = value;
  else if (axis == "eta_e") c.eta_e = value;
  else if (axis == "lambda") c.mr.lambda = value;
  else if (axis == "tau") c.mr.tau = value;
  else if (axis == "rho") {
    c.mr.rho = value;
    c.mr.rho_rule = RhoRule::fixed;
  } else if (axis == "r") c.edit_r = value;
  else throw ConfigError("inapplicable sweep axis '" + axis + "'");

  if (variant == "base") {
    c.mr_enabled = false;
    c.edit_op = "none";
  } else if (variant == "rect") {
    c.mr_enabled = true;
    c.edit_op = "none";
  } else {
    const auto dash = variant.find('-');
    if (dash == std::string::npos) throw ConfigError("unknown sweep variant '" + variant + "'");
    const auto op = variant.substr(0, dash);
    if (op != "add" && op != "prune") throw ConfigError("unknown sweep variant '" + variant + "'");
    c.mr_enabled = false;
    c.edit_op = op == "add" ? "complete" : "prune";
    c.edit_target = parse_edit_target(variant.substr(dash + 1));
  }
  return c;
}

namespace {

// Cells whose effective settings coincide (e.g. base cells along the lambda
// axis) share one run.
std::string effective_key(const ExperimentConfig& c) {
  json j = c.to_json();
  std::vector<std::string> drop{"output.dir", "seeds", "sweep.axis", "sweep.values", "sweep.variants"};
  for (const auto& [k, v] : j.items()) {
    if (!c.mr_enabled && k.rfind("mr.", 0) == 0) drop.push_back(k);
    if (c.edit_op == "none" && k.rfind("edit.", 0) == 0 && k != "edit.op") drop.push_back(k);
    if (!c.mr_enabled && c.edit_op == "none" && k.rfind("encoder.", 0) == 0) drop.push_back(k);
  }
  for (const auto& k : drop) j.erase(k);
  return j.dump();
}

void check_axis_applicable(const ExperimentConfig& config, const std::string& axis,
                           const std::vector<std::string>& variants) {
  const bool has_rect = std::find(variants.begin(), variants.end(), "rect") != variants.end();
  const bool has_edit = variants.size() > 2;
  if ((axis == "lambda" || axis == "tau" || axis == "rho") && !has_rect)
    throw ConfigError("sweep axis '" + axis + "' needs rectification variants");
  if (axis == "r" && !has_edit) throw ConfigError("sweep axis 'r' needs edit variants");
  if (has_rect && !uses_features(config.model_kind))
    throw ConfigError("rectification variants need a backbone that consumes features");
}

std::string cell_dir_name(const SweepCell& cell) {
  return cell.tags.variant + "/" + cell.tags.axis + "=" + format_double(cell.tags.value) + "/seed=" +
         std::to_string(cell.tags.seed);
}

}  // namespace

SweepResult sweep(const ExperimentConfig& config, const std::string& axis, const std::vector<double>& values,
                  const std::vector<std::uint64_t>& seeds, ExperimentCache* cache) {
  if (std::find(sweep_axes().begin(), sweep_axes().end(), axis) == sweep_axes().end())
    throw ConfigError("inapplicable sweep axis '" + axis + "'");
  if (values.empty() || seeds.empty()) throw ConfigError("sweep needs at least one value and one seed");
  ExperimentCache local;
  auto& c = cache ? *cache : local;
  auto& results = c.impl().results;

  SweepResult out;
  out.axis = axis;
  out.variants = sweep_variant_names(config, axis);
  check_axis_applicable(config, axis, out.variants);

  for (const double value : values) {
    for (const auto seed : seeds) {
      for (const auto& variant : out.variants) {
        const auto cfg = cell_config(config, axis, value, seed, variant);
        const auto key = effective_key(cfg);
        std::shared_ptr<const ExperimentResult> res;
        if (const auto it = results.find(key); it != results.end()) {
          res = it->second;
        } else {
          res = std::make_shared<const ExperimentResult>(run_experiment(cfg, &c));
          results[key] = res;
        }
        SweepCell cell{{variant, axis, value, seed}, res->metrics, res->mean_recovery()};
        if (!config.output_dir.empty()) write_bundle(*res, cfg, cell.tags, fs::path(config.output_dir) / "cells" / cell_dir_name(cell));
        out.cells.push_back(std::move(cell));
      }
    }
  }
  if (!config.output_dir.empty()) {
    write_cells_csv(out, fs::path(config.output_dir) / "cells.csv");
    write_summary_csv(axis, summarize(out), fs::path(config.output_dir) / "summary.csv");
  }
  return out;
}

namespace {

std::vector<std::pair<std::string, double>> cell_metrics(const SweepCell& cell, bool with_recovery) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [k, v] : cell.metrics.at_k) {
    out.emplace_back("recall@" + std::to_string(k), v.recall);
    out.emplace_back("ndcg@" + std::to_string(k), v.ndcg);
  }
  if (with_recovery) out.emplace_back("recovery", cell.recovery ? *cell.recovery : std::nan(""));
  return out;
}

bool any_recovery(const SweepResult& r) {
  return std::any_of(r.cells.begin(), r.cells.end(), [](const SweepCell& c) { return c.recovery.has_value(); });
}

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  double mean = 0;
  for (const double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  const double sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return {mean, sd};
}

}  // namespace

void write_cells_csv(const SweepResult& result, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const bool rec = any_recovery(result);
  out << "variant,axis,value,seed";
  if (!result.cells.empty())
    for (const auto& [name, v] : cell_metrics(result.cells.front(), rec)) out << ',' << name;
  out << '\n';
  for (const auto& cell : result.cells) {
    out << cell.tags.variant << ',' << cell.tags.axis << ',' << format_double(cell.tags.value) << ','
        << cell.tags.seed;
    for (const auto& [name, v] : cell_metrics(cell, rec)) out << ',' << (std::isnan(v) ? "" : format_double(v));
    out << '\n';
  }
}

std::vector<SummaryRow> summarize(const SweepResult& result) {
  const bool rec = any_recovery(result);
  // Keyed by (value, variant position, metric position) to keep sweep order.
  std::map<std::tuple<double, std::size_t, std::size_t>, std::pair<std::string, std::vector<double>>> groups;
  for (const auto& cell : result.cells) {
    const auto vpos = static_cast<std::size_t>(
        std::find(result.variants.begin(), result.variants.end(), cell.tags.variant) - result.variants.begin());
    const auto metrics = cell_metrics(cell, rec);
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      if (std::isnan(metrics[m].second)) continue;
      auto& g = groups[{cell.tags.value, vpos, m}];
      g.first = metrics[m].first;
      g.second.push_back(metrics[m].second);
    }
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, g] : groups) {
    const auto [mean, sd] = mean_sd(g.second);
    rows.push_back({result.variants[std::get<1>(key)], std::get<0>(key), g.first, mean, sd, g.second.size()});
  }
  return rows;
}

void write_summary_csv(const std::string& axis, const std::vector<SummaryRow>& rows, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "variant,axis,value,metric,mean,sd,n\n";
  for (const auto& r : rows)
    out << r.variant << ',' << axis << ',' << format_double(r.value) << ',' << r.metric << ','
        << format_double(r.mean) << ',' << format_double(r.sd) << ',' << r.n << '\n';
}

// ---------------------------------------------------------------------------
// Report

namespace {

void collect_bundles(const fs::path& p, std::vector<fs::path>& out) {
  if (fs::is_regular_file(p)) {
    out.push_back(p);
    return;
  }
  if (!fs::is_directory(p)) throw DataError("bundle path " + p.string() + " does not exist");
  if (fs::exists(p / "metrics.json")) {
    out.push_back(p / "metrics.json");
    return;
  }
  std::vector<fs::path> found;
  for (const auto& entry : fs::recursive_directory_iterator(p))
    if (entry.is_regular_file() && entry.path().filename() == "metrics.json") found.push_back(entry.path());
  std::sort(found.begin(), found.end());
  out.insert(out.end(), found.begin(), found.end());
}

std::vector<std::pair<std::string, double>> bundle_metrics(const json& doc, const std::string& name) {
  if (!doc.contains("metrics") || !doc["metrics"].is_object())
    throw DataError("bundle " + name + " has no metrics object");
  std::vector<std::pair<std::string, double>> out;
  std::vector<std::pair<std::size_t, const json*>> ks;
  for (const auto& [key, v] : doc["metrics"].items()) {
    if (key.empty() || !std::all_of(key.begin(), key.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) continue;
    ks.emplace_back(std::stoul(key), &v);
  }
  std::sort(ks.begin(), ks.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [k, v] : ks) {
    for (const char* m : {"recall", "ndcg"}) {
      if (!v->contains(m) || !(*v)[m].is_number())
        throw DataError("bundle " + name + " is missing metric " + m + "@" + std::to_string(k));
      out.emplace_back(std::string(m) + "@" + std::to_string(k), (*v)[m].get<double>());
    }
  }
  return out;
}

}  // namespace

ReportTable report(const std::vector<fs::path>& bundles) {
  std::vector<fs::path> files;
  for (const auto& b : bundles) collect_bundles(b, files);
  if (files.empty()) throw DataError("no bundles found");
  ReportTable table;
  std::string reference;
  for (const auto& file : files) {
    const auto name = file.parent_path().string();
    std::ifstream in(file);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw DataError("bundle " + name + ": " + e.what());
    }
    auto metrics = bundle_metrics(doc, name);
    std::vector<std::string> names;
    for (const auto& [m, v] : metrics) names.push_back(m);
    if (table.metrics.empty() && reference.empty()) {
      table.metrics = names;
      reference = name;
    } else if (names != table.metrics) {
      std::set<std::string> a(names.begin(), names.end()), b(table.metrics.begin(), table.metrics.end());
      std::string detail;
      for (const auto& m : b)
        if (!a.count(m)) detail += " missing " + m + ";";
      for (const auto& m : a)
        if (!b.count(m)) detail += " unexpected " + m + ";";
      throw DataError("schema mismatch in bundle " + name + " (reference " + reference + "):" + detail);
    }
    // Recovery exists only for rectified runs, so it sits outside the schema.
    if (doc.contains("recovery") && doc["recovery"].is_number())
      metrics.emplace_back("recovery", doc["recovery"].get<double>());
    LongRow base{doc.value("variant", std::string("single")), doc.value("axis", std::string("none")),
                 doc.value("value", 0.0), doc.value("seed", std::uint64_t{0}), "", 0.0};
    for (const auto& [m, v] : metrics) {
      LongRow row = base;
      row.metric = m;
      row.score = v;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

void write_long_csv(const ReportTable& table, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "variant,axis,value,seed,metric,score\n";
  for (const auto& r : table.rows)
    out << r.variant << ',' << r.axis << ',' << format_double(r.value) << ',' << r.seed << ',' << r.metric << ','
        << format_double(r.score) << '\n';
}

void write_report_summary_csv(const ReportTable& table, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  std::map<std::tuple<std::string, std::string, double, std::string>, std::vector<double>> groups;
  for (const auto& r : table.rows) groups[{r.variant, r.axis, r.value, r.metric}].push_back(r.score);
  out << "variant,axis,value,metric,mean,sd,n\n";
  for (const auto& [key, xs] : groups) {
    const auto [mean, sd] = mean_sd(xs);
    out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << format_double(std::get<2>(key)) << ','
        << std::get<3>(key) << ',' << format_double(mean) << ',' << format_double(sd) << ',' << xs.size() << '\n';
  }
}

}  // namespace trustrec
