#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trustrec/backbone.hpp"
#include "trustrec/corpus.hpp"
#include "trustrec/edge_editor.hpp"
#include "trustrec/evaluator.hpp"
#include "trustrec/rectifier.hpp"

namespace trustrec {

// Settings of the auxiliary LightGCN encoder that supplies both the
// rectifier's anchors and the edge editor's collaborative prior.
struct EncoderSettings {
  std::size_t dim = 64;
  std::size_t layers = 2;
  double lr = 1e-3;
  double l2 = 1e-4;
  std::size_t batch_size = 2048;
  std::size_t max_epochs = 1000;
  std::size_t patience = 30;
};

// One experiment. Serialized as a single JSON object with flat dotted keys;
// unknown keys are rejected.
struct ExperimentConfig {
  // data.*
  std::string data_source = "synth";  // synth | files
  std::string data_interactions;      // raw "user<TAB>item" file (files source)
  std::size_t data_min_core = 5;
  std::string data_split_dir;  // pre-split directory, used instead of data_interactions
  std::map<std::string, std::string> data_features;  // modality -> MMF1 or .csv path
  SynthSpec synth;

  // model.* and train.*
  ModelKind model_kind = ModelKind::vbpr;
  std::size_t model_dim = 64;
  std::size_t model_layers = 2;
  std::size_t model_knn_k = 10;
  TrainConfig train;  // seed and log are set per run

  EncoderSettings encoder;

  // mr.*
  bool mr_enabled = false;
  RectifyConfig mr;  // known_eta_m, anchor and projection.seed are set per run

  // corrupt.*
  double eta_m = 0.0;
  double eta_e = 0.0;
  std::vector<std::string> corrupt_modalities;  // empty: every modality

  // edit.*
  std::string edit_op = "none";  // none | prune | complete
  double edit_r = 0.05;
  EditTarget edit_target = EditTarget::train_only;
  std::size_t edit_k_user = 10;
  std::size_t edit_k_item = 10;

  // eval.*
  std::vector<std::size_t> eval_ks{10, 20};
  FilterPolicy eval_policy = FilterPolicy::original_positives;

  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir;

  // sweep.*
  std::string sweep_axis;
  std::vector<double> sweep_values;
  std::string sweep_variants = "auto";  // auto | mr | edit

  static ExperimentConfig from_json(const nlohmann::json& j);  // throws ConfigError
  nlohmann::json to_json() const;                               // every key, resolved
  void validate() const;                                        // throws ConfigError

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return a.to_json() == b.to_json(); }
};

ExperimentConfig load_config(const std::filesystem::path& path);

struct ModalityRecovery {
  std::string modality;
  std::size_t corrupted_items = 0;
  double rate = 0.0;
};

struct ExperimentResult {
  MetricsReport metrics;
  std::vector<ModalityRecovery> recovery;  // filled when MR ran on corrupted features
  TrainResult training;
  nlohmann::json provenance;

  // Mean recovery over modalities with at least one corrupted item.
  std::optional<double> mean_recovery() const;
};

// Reuses loaded data and pretrained encoders across runs that share them.
class ExperimentCache {
 public:
  ExperimentCache();
  ~ExperimentCache();
  ExperimentCache(const ExperimentCache&) = delete;
  ExperimentCache& operator=(const ExperimentCache&) = delete;

  struct Impl;
  Impl& impl() { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

// Data -> corrupt -> (rectify) -> (edit) -> train -> evaluate for one seed.
// Stage failures are rethrown as StageError; configuration problems as
// ConfigError.
ExperimentResult run_experiment(const ExperimentConfig& config, ExperimentCache* cache = nullptr);

// Labels attached to a bundle so report() can place it.
struct BundleTags {
  std::string variant = "single";
  std::string axis = "none";
  double value = 0.0;
  std::uint64_t seed = 1;
};

// metrics.json, provenance.json, config.json and history.csv under `dir`.
void write_bundle(const ExperimentResult& result, const ExperimentConfig& config, const BundleTags& tags,
                  const std::filesystem::path& dir);
nlohmann::json metrics_document(const ExperimentResult& result, const BundleTags& tags);

struct SweepCell {
  BundleTags tags;
  MetricsReport metrics;
  std::optional<double> recovery;
};

struct SweepResult {
  std::string axis;
  std::vector<std::string> variants;
  std::vector<SweepCell> cells;  // ordered by (value, seed, variant)
};

// Variant names for the sweep of `config`: {base, rect} or base plus
// add/prune for each edit target.
std::vector<std::string> sweep_variant_names(const ExperimentConfig& config, const std::string& axis);

// The configuration of one sweep cell.
ExperimentConfig cell_config(const ExperimentConfig& base, const std::string& axis, double value,
                             std::uint64_t seed, const std::string& variant);

// Runs every (value, seed, variant) cell. Bundles are written under
// output_dir/cells/ when output_dir is set, plus cells.csv and summary.csv.
SweepResult sweep(const ExperimentConfig& config, const std::string& axis, const std::vector<double>& values,
                  const std::vector<std::uint64_t>& seeds, ExperimentCache* cache = nullptr);

void write_cells_csv(const SweepResult& result, const std::filesystem::path& path);

struct SummaryRow {
  std::string variant;
  double value = 0.0;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single seed
  std::size_t n = 0;
};

std::vector<SummaryRow> summarize(const SweepResult& result);
void write_summary_csv(const std::string& axis, const std::vector<SummaryRow>& rows,
                       const std::filesystem::path& path);

struct LongRow {
  std::string variant;
  std::string axis;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::string metric;
  double score = 0.0;
};

struct ReportTable {
  std::vector<LongRow> rows;
  std::vector<std::string> metrics;
};

// Reads bundles (directories holding metrics.json, searched recursively,
// or metrics.json files). Throws DataError naming the first bundle whose
// metric keys differ from the others.
ReportTable report(const std::vector<std::filesystem::path>& bundles);
void write_long_csv(const ReportTable& table, const std::filesystem::path& path);
void write_report_summary_csv(const ReportTable& table, const std::filesystem::path& path);

// Shortest round-trip decimal form.
std::string format_double(double x);

}  // namespace trustrec
