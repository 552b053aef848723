#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "clinpath/severity.hpp"

namespace clinpath::pipeline {

inline constexpr const char* kVersion = "0.1.0";

// exit code 1
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// exit code 2
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  // inputs and resources; empty note/vitals/demographics paths fall back to
  // the synth outputs under `out`
  std::string notes, vitals, demographics;
  std::string lexicon = "resources/lexicon.tsv";
  std::string dictionary = "resources/concept_dictionary.tsv";
  std::string triggers = "resources/negation_triggers.tsv";
  std::string flags = "resources/flags.json";
  std::string decease_patterns = "resources/decease_patterns.txt";
  std::string annotations;        // optional matcher bypass
  std::string external_features;  // optional predict feature override
  std::string out = "out";

  // corpus: minimum fraction of stay days carrying at least one note
  double min_note_day_fraction = 0.0;

  // textproc
  double theta = 0.2;
  int scope_window = 6;

  // vectors
  int latent = 16;
  std::vector<int> encoder_hidden;  // empty -> default 4*latent
  int ae_epochs = 80;
  double ae_learning_rate = 0.05;
  int ae_batch = 32;
  std::string ae_train_on = "all";  // "all" | "stage1"

  // cluster
  int k_min = 2, k_max = 12;

  // explain
  int n_trees = 200, max_depth = 12, min_leaf = 2, feature_subsample = 0, top_m = 5;

  // severity
  severity::SeverityThresholds thresholds;

  // pathways
  int min_support = 1;

  // predict
  std::string subgroup_model = "random_forest";  // | "decision_tree"
  std::vector<int> state_hidden{64};
  int state_epochs = 200;
  double state_learning_rate = 0.05;
  int state_batch = 32;
  std::string representation = "ternary";  // | "dense"
  double holdout = 0.2;

  // synth
  int synth_patients = 400;
  int synth_clusters = 4;

  std::uint64_t seed = 1;

  static PipelineConfig from_json(const std::string& text);  // throws ConfigError
  std::string to_json() const;
  // hash of the canonical config with the output directory removed, so two
  // runs into different directories stay comparable
  std::string config_hash() const;
  void validate() const;  // throws ConfigError

  std::string notes_path() const;
  std::string vitals_path() const;
  std::string demographics_path() const;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> kSubcommands = {
      "ingest", "structure", "stages", "vectors", "cluster", "explain",
      "severity", "pathways", "predict", "synth", "all"};
  return kSubcommands;
}

// Runs one subcommand (or the whole chain for "all"); artifacts land under
// config.out/<subcommand>/ with a manifest next to them. Throws ConfigError
// or DataError.
void run(const std::string& subcommand, const PipelineConfig& config);

}  // namespace clinpath::pipeline
