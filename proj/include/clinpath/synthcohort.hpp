#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "clinpath/pathways.hpp"

namespace clinpath::synth {

// Probabilities over {Discharge, Improve, Persistent, Deteriorate, Decease};
// must sum to 1.
struct OutcomeRow {
  double discharge = 0.0;
  double improve = 0.0;
  double persistent = 0.0;
  double deteriorate = 0.0;
  double decease = 0.0;

  double sum() const { return discharge + improve + persistent + deteriorate + decease; }
  std::array<double, 5> values() const { return {discharge, improve, persistent, deteriorate, decease}; }
  double value(pathways::Outcome o) const;
};

struct ClusterSpec {
  std::string name;
  std::vector<std::string> signature;  // lexicon surfaces, positive at stage 1
  double signature_prevalence = 0.97;
  int initial_severity = 3;  // 2 or 3
  OutcomeRow start_row;      // first boundary
  OutcomeRow after_improve, after_persistent, after_deteriorate;
};

struct GeneratorConfig {
  int n_patients = 200;
  std::vector<ClusterSpec> clusters;
  std::vector<std::pair<std::string, double>> background;  // (surface, stage-1 prevalence)
  std::vector<std::string> denial_pool;  // explicitly denied at stage 1
  double negation_rate = 0.15;
  std::string treated_surface = "nausea";                  // cleared on Improve edges
  std::string emerging_surface = "abdominal distension";   // introduced on Deteriorate edges
  int max_boundaries = 5;  // outcomes at the cap collapse to Discharge
  std::uint64_t seed = 1;

  // standard multi-cluster fixture (up to 8 separable clusters)
  static GeneratorConfig demo(int n_patients, int n_clusters, std::uint64_t seed);
  // two-cluster fixture with extreme rows, sized for transition-recovery checks
  static GeneratorConfig markov_demo(int n_patients, std::uint64_t seed);
};

// Planted transition probability for (cluster, boundary stage, prior state,
// outcome); the cap boundary is all Discharge.
double planted_probability(const GeneratorConfig& config, int cluster, int stage,
                           pathways::PriorState prior, pathways::Outcome outcome);

struct PatientTruth {
  std::string patient_id;
  int cluster = 0;
  int los = 0;
  std::vector<int> stage_scores;             // severity score per stage
  std::vector<pathways::Outcome> outcomes;   // realized outcome per boundary
};

struct GroundTruth {
  GeneratorConfig config;
  std::vector<PatientTruth> patients;
};

struct GeneratedCohort {
  std::string notes_jsonl;
  std::string vitals_csv;
  std::string demographics_jsonl;
  GroundTruth truth;
};

// Deterministic per seed (per-patient derived streams); the emitted notes
// and vitals realize the sampled severity trajectory exactly, negation
// phrasings, synonym rotations, misspellings and single-day gaps included.
GeneratedCohort generate_cohort(const GeneratorConfig& config);

std::string ground_truth_report(const GroundTruth& truth);  // JSON
GroundTruth ground_truth_from_json(const std::string& text);

void write_cohort(const GeneratedCohort& cohort, const std::string& dir);

}  // namespace clinpath::synth
