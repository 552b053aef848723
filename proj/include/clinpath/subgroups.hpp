#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clinpath/types.hpp"
#include "clinpath/vectors.hpp"

namespace clinpath::subgroups {

struct Clustering {
  int k = 0;
  Matrix centers;               // k x dim
  std::vector<int> assignment;  // per input row, 0..k-1
  double inertia = 0.0;         // sum of squared distances to assigned centers
  std::uint64_t seed = 0;
  std::vector<double> inertia_curve;  // per Lloyd iteration
};

// k-means++ seeding followed by Lloyd iterations until the assignment is a
// fixpoint (or 300 iterations). An emptied cluster is reseeded from the
// point farthest from its center. Deterministic per seed.
Clustering kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iter = 300);

namespace detail {
// centroid update used by kmeans; exposed for the k=1 centroid property
Matrix update_centers(const Matrix& points, const std::vector<int>& assignment, int k);
}  // namespace detail

Matrix pairwise_distances(const Matrix& points);  // Euclidean, n x n

// Mean of s(i) = (b - a) / max(a, b); singleton clusters and all-zero
// distances contribute 0. Throws when fewer than two clusters are present.
double mean_silhouette(const Matrix& points, const std::vector<int>& assignment);
double mean_silhouette_precomputed(const Matrix& distances, const std::vector<int>& assignment);

struct SilhouetteReport {
  std::vector<std::pair<int, double>> scores;  // (k, mean silhouette)
  int chosen_k = 0;                            // argmax, ties toward smaller k
};

int pick_best_k(const std::vector<std::pair<int, double>>& scores);

SilhouetteReport select_k(const Matrix& points, int k_min, int k_max, std::uint64_t seed);

std::string silhouette_to_csv(const SilhouetteReport& report);

// ---------------------------------------------------------------------------
// Random forest over ternary CUI vectors

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double cover = 0.0;  // training samples reaching the node
  Vector probs;        // leaf class distribution (empty on internal nodes)

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int n_classes = 0;

  // x[feature] <= threshold descends left
  const Vector& leaf_probs(const Vector& x) const;
  Vector expected_probs() const;  // cover-weighted mean over leaves
};

struct ForestConfig {
  int n_trees = 200;
  int max_depth = 12;
  int min_leaf = 2;
  int feature_subsample = 0;  // 0 selects round(sqrt(n_features))
  bool bootstrap = true;
  std::uint64_t seed = 1;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  int n_classes = 0;
  int n_features = 0;
  ForestConfig config;
  double oob_accuracy = -1.0;  // -1 when not measurable

  Vector predict_proba(const Vector& x) const;  // mean of leaf distributions
  int predict(const Vector& x) const;
};

// Bootstrap-sampled Gini trees over a random feature subset per node;
// per-tree seeds derive from the master seed. A single-class input yields a
// degenerate forest that always predicts that class.
ForestModel train_forest(const Matrix& x, const std::vector<int>& labels,
                         const ForestConfig& config);

// Single fully-grown tree on all features (no bootstrap); used by the
// subgroup classifier's decision-tree variant.
DecisionTree train_single_tree(const Matrix& x, const std::vector<int>& labels, int n_classes,
                               int max_depth, int min_leaf, std::uint64_t seed);

std::string forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Path-dependent TreeSHAP

struct ShapValues {
  Vector base;  // per class: expected model output
  Matrix phi;   // n_features x n_classes
};

ShapValues tree_shap(const DecisionTree& tree, const Vector& x);
ShapValues tree_shap(const ForestModel& forest, const Vector& x);

struct ProfileEntry {
  std::string cui;
  std::string preferred_name;
  double mean_abs_shap = 0.0;
  std::string direction;  // "presence" or "absence"
};

struct SubgroupProfile {
  int cluster = 0;
  std::size_t n_patients = 0;
  std::vector<ProfileEntry> presence;  // conditions driving membership
  std::vector<ProfileEntry> absence;   // "absence of ..." drivers
};

struct MisclassifiedPatient {
  std::string patient_id;
  int cluster = 0;
  int predicted = 0;
  std::vector<std::pair<std::string, double>> top_features;  // cui, shap toward predicted
};

struct ExplainResult {
  std::vector<SubgroupProfile> profiles;
  std::vector<MisclassifiedPatient> misclassified;
};

ExplainResult explain_subgroups(const ForestModel& forest, const Matrix& x,
                                const std::vector<int>& assignment,
                                const std::vector<std::string>& patient_ids,
                                const vectors::ConceptVocabulary& vocabulary,
                                const std::map<std::string, std::string>& preferred_names,
                                int top_m);

std::string explain_to_json(const ExplainResult& result);

std::string clusters_to_csv(const std::vector<std::string>& patient_ids,
                            const std::vector<int>& assignment);

}  // namespace clinpath::subgroups
