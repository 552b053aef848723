#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clinpath/mlp.hpp"
#include "clinpath/pathways.hpp"
#include "clinpath/subgroups.hpp"
#include "clinpath/types.hpp"

namespace clinpath::predict {

// Stage-2 task classes: Improve, Persist, Deteriorate.
inline constexpr int kStateClassCount = 3;
std::optional<int> state_class_of(pathways::Outcome o);  // empty for the excluded outcomes
std::string_view state_class_name(int cls);

struct EvalMetrics {
  double accuracy = 0.0;
  Matrix confusion;  // true x predicted
  std::vector<double> precision, recall;
  std::size_t n_train = 0, n_test = 0;
};

EvalMetrics evaluate(const std::vector<int>& truth, const std::vector<int>& predicted,
                     int n_classes);

// Stratified per-class split; returns (train indices, test indices),
// disjoint by construction. Every class keeps at least one training sample.
std::pair<std::vector<int>, std::vector<int>> stratified_split(const std::vector<int>& labels,
                                                               double holdout_fraction,
                                                               std::uint64_t seed);

enum class ClassifierKind { DecisionTree, RandomForest };

struct SubgroupClassifierConfig {
  ClassifierKind kind = ClassifierKind::RandomForest;
  subgroups::ForestConfig forest;  // also carries tree depth settings
  double holdout_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct SubgroupClassifier {
  ClassifierKind kind = ClassifierKind::RandomForest;
  subgroups::ForestModel model;  // a single-tree "forest" for the tree variant
  int n_subgroups = 0;
  EvalMetrics heldout;

  int predict_subgroup(const Vector& stage1_ternary) const;
};

// Stage-1 CUI vectors -> cluster labels, with a seeded stratified holdout.
// Throws when fewer than two subgroups are present.
SubgroupClassifier train_subgroup_classifier(const Matrix& x, const std::vector<int>& labels,
                                             const SubgroupClassifierConfig& config);

struct StateClassifierConfig {
  std::vector<int> hidden{64};
  int epochs = 200;
  double learning_rate = 0.05;
  int batch_size = 32;
  double holdout_fraction = 0.2;
  bool with_subgroup_feature = true;
  std::uint64_t seed = 1;
};

struct StateClassifier {
  nnet::Mlp net;
  bool with_subgroup_feature = true;
  int n_subgroups = 0;
  int representation_dim = 0;
  EvalMetrics heldout;
  std::vector<double> loss_curve;

  // probabilities over {Improve, Persist, Deteriorate}
  Vector predict_proba(const Vector& representation, int subgroup) const;
};

// Softmax cross-entropy network over the stage-1 representation, optionally
// concatenated with a one-hot subgroup label. Throws (listing class counts)
// when a class is absent from the training rows.
StateClassifier train_state_classifier(const Matrix& representations,
                                       const std::vector<int>& subgroup_labels,
                                       const std::vector<int>& state_labels,
                                       const StateClassifierConfig& config);

struct PathwayPrediction {
  int subgroup = 0;
  Vector state_distribution;  // 3-simplex
  // matrices of the predicted subgroup, first boundary onward
  std::vector<const pathways::TransitionMatrix*> network;
};

PathwayPrediction predict_pathway(const Vector& stage1_ternary, const Vector& representation,
                                  const SubgroupClassifier& subgroup_model,
                                  const StateClassifier& state_model,
                                  const std::vector<pathways::TransitionMatrix>& networks);

std::string metrics_to_json(const EvalMetrics& m);

}  // namespace clinpath::predict
