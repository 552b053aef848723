#include "clinpath/subgroups.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "clinpath/rng.hpp"

namespace clinpath::subgroups {

using nlohmann::json;

namespace detail {

Matrix update_centers(const Matrix& points, const std::vector<int>& assignment, int k) {
  const Eigen::Index dim = points.cols();
  Matrix centers = Matrix::Zero(k, dim);
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int c = assignment[static_cast<std::size_t>(i)];
    centers.row(c) += points.row(i);
    counts[static_cast<std::size_t>(c)] += 1.0;
  }
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0.0) {
      centers.row(c) /= counts[static_cast<std::size_t>(c)];
    }
  }
  return centers;
}

}  // namespace detail

namespace {

// squared distances of every point to every center via the expansion
// |p - c|^2 = |p|^2 + |c|^2 - 2 p.c
Matrix squared_distances_to(const Matrix& points, const Matrix& centers) {
  const Vector pnorm = points.rowwise().squaredNorm();
  const Vector cnorm = centers.rowwise().squaredNorm();
  Matrix d2 = -2.0 * points * centers.transpose();
  d2.colwise() += pnorm;
  d2.rowwise() += cnorm.transpose();
  return d2.cwiseMax(0.0);
}

}  // namespace

Clustering kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iter) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (n < k) throw std::invalid_argument("kmeans: fewer points than clusters");

  Rng rng(seed);
  Clustering result;
  result.k = k;
  result.seed = seed;
  result.centers.resize(k, points.cols());

  // k-means++ seeding
  const Eigen::Index first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
  result.centers.row(0) = points.row(first);
  Vector d2 = (points.rowwise() - result.centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    } else {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2(i);
        if (r <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    result.centers.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - result.centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    const Matrix dist2 = squared_distances_to(points, result.centers);
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      dist2.row(i).minCoeff(&best);
      inertia += dist2(i, best);
      if (assignment[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    result.inertia_curve.push_back(inertia);
    result.inertia = inertia;
    if (!changed) break;

    result.centers = detail::update_centers(points, assignment, k);

    // repair emptied clusters from the farthest point
    std::vector<bool> empty(static_cast<std::size_t>(k), true);
    for (int a : assignment) empty[static_cast<std::size_t>(a)] = false;
    for (int c = 0; c < k; ++c) {
      if (!empty[static_cast<std::size_t>(c)]) continue;
      const Matrix cur = squared_distances_to(points, result.centers);
      Eigen::Index far_idx = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double di = cur.row(i).minCoeff();
        if (di > far_d) {
          far_d = di;
          far_idx = i;
        }
      }
      result.centers.row(c) = points.row(far_idx);
    }
  }
  result.assignment = std::move(assignment);
  return result;
}

Matrix pairwise_distances(const Matrix& points) {
  Matrix d2 = squared_distances_to(points, points);
  d2.diagonal().setZero();
  return d2.cwiseSqrt();
}

double mean_silhouette_precomputed(const Matrix& distances, const std::vector<int>& assignment) {
  const Eigen::Index n = distances.rows();
  if (static_cast<std::size_t>(n) != assignment.size()) {
    throw std::invalid_argument("mean_silhouette: size mismatch");
  }
  int k = 0;
  for (int a : assignment) k = std::max(k, a + 1);
  std::vector<double> sizes(static_cast<std::size_t>(k), 0.0);
  for (int a : assignment) sizes[static_cast<std::size_t>(a)] += 1.0;
  int nonempty = 0;
  for (double s : sizes) nonempty += s > 0.0 ? 1 : 0;
  if (nonempty < 2) throw std::invalid_argument("mean_silhouette: need at least two clusters");

  double total = 0.0;
  std::vector<double> sums(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      sums[static_cast<std::size_t>(assignment[static_cast<std::size_t>(j)])] += distances(i, j);
    }
    const int own = assignment[static_cast<std::size_t>(i)];
    const double own_size = sizes[static_cast<std::size_t>(own)];
    if (own_size <= 1.0) continue;  // singleton contributes 0
    const double a = sums[static_cast<std::size_t>(own)] / (own_size - 1.0);
    double b = std::numeric_limits<double>::max();
    for (int c = 0; c < k; ++c) {
      if (c == own || sizes[static_cast<std::size_t>(c)] == 0.0) continue;
      b = std::min(b, sums[static_cast<std::size_t>(c)] / sizes[static_cast<std::size_t>(c)]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
    // a == b == 0: convention s = 0
  }
  return total / static_cast<double>(n);
}

double mean_silhouette(const Matrix& points, const std::vector<int>& assignment) {
  return mean_silhouette_precomputed(pairwise_distances(points), assignment);
}

int pick_best_k(const std::vector<std::pair<int, double>>& scores) {
  if (scores.empty()) throw std::invalid_argument("pick_best_k: no scores");
  int best_k = scores.front().first;
  double best = scores.front().second;
  for (const auto& [k, score] : scores) {
    if (score > best) {  // strict: ties keep the smaller k seen first
      best = score;
      best_k = k;
    }
  }
  return best_k;
}

SilhouetteReport select_k(const Matrix& points, int k_min, int k_max, std::uint64_t seed) {
  const int n = static_cast<int>(points.rows());
  k_min = std::max(2, k_min);
  k_max = std::min(k_max, n - 1);
  if (k_max < k_min) throw std::invalid_argument("select_k: empty k range");

  const Matrix distances = pairwise_distances(points);
  SilhouetteReport report;
  for (int k = k_min; k <= k_max; ++k) {
    const Clustering c = kmeans(points, k, derive_seed(seed, static_cast<std::uint64_t>(k)));
    report.scores.emplace_back(k, mean_silhouette_precomputed(distances, c.assignment));
  }
  report.chosen_k = pick_best_k(report.scores);
  return report;
}

std::string silhouette_to_csv(const SilhouetteReport& report) {
  std::string out = "k,score\n";
  char buf[64];
  for (const auto& [k, score] : report.scores) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f\n", k, score);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decision trees and random forest

const Vector& DecisionTree::leaf_probs(const Vector& x) const {
  int idx = 0;
  while (!nodes[static_cast<std::size_t>(idx)].is_leaf()) {
    const TreeNode& node = nodes[static_cast<std::size_t>(idx)];
    idx = x(node.feature) <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(idx)].probs;
}

Vector DecisionTree::expected_probs() const {
  Vector out = Vector::Zero(n_classes);
  double total = 0.0;
  for (const TreeNode& node : nodes) {
    if (node.is_leaf()) {
      out += node.cover * node.probs;
      total += node.cover;
    }
  }
  if (total > 0.0) out /= total;
  return out;
}

namespace {

struct TreeBuilder {
  const Matrix& x;
  const std::vector<int>& labels;
  int n_classes;
  int max_depth;
  int min_leaf;
  int n_candidates;  // features tried per node
  Rng rng;
  std::vector<int> feature_pool;
  std::vector<std::pair<double, int>> scratch;  // (value, label)

  TreeBuilder(const Matrix& x_, const std::vector<int>& labels_, int n_classes_, int max_depth_,
              int min_leaf_, int n_candidates_, std::uint64_t seed)
      : x(x_), labels(labels_), n_classes(n_classes_), max_depth(max_depth_),
        min_leaf(min_leaf_), n_candidates(n_candidates_), rng(seed) {
    feature_pool.resize(static_cast<std::size_t>(x.cols()));
    std::iota(feature_pool.begin(), feature_pool.end(), 0);
  }

  static double gini(const std::vector<double>& counts, double total) {
    if (total <= 0.0) return 0.0;
    double sum_sq = 0.0;
    for (double c : counts) sum_sq += c * c;
    return 1.0 - sum_sq / (total * total);
  }

  int build(std::vector<TreeNode>& nodes, std::vector<int>& indices, int begin, int end,
            int depth) {
    const int count = end - begin;
    std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
    for (int i = begin; i < end; ++i) {
      counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(
          indices[static_cast<std::size_t>(i)])])] += 1.0;
    }
    const double node_gini = gini(counts, static_cast<double>(count));

    const int node_index = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes.back().cover = static_cast<double>(count);

    const bool can_split = depth < max_depth && count >= 2 * min_leaf && node_gini > 0.0;
    int best_feature = -1;
    double best_threshold = 0.0, best_score = node_gini;

    if (can_split) {
      // partial Fisher-Yates draw of candidate features
      const int n_features = static_cast<int>(x.cols());
      const int m = std::min(n_candidates, n_features);
      for (int i = 0; i < m; ++i) {
        const std::size_t j = static_cast<std::size_t>(i) +
                              rng.below(static_cast<std::uint64_t>(n_features - i));
        std::swap(feature_pool[static_cast<std::size_t>(i)], feature_pool[j]);
      }
      for (int fi = 0; fi < m; ++fi) {
        const int feature = feature_pool[static_cast<std::size_t>(fi)];
        scratch.clear();
        for (int i = begin; i < end; ++i) {
          const int row = indices[static_cast<std::size_t>(i)];
          scratch.emplace_back(x(row, feature), labels[static_cast<std::size_t>(row)]);
        }
        std::sort(scratch.begin(), scratch.end());
        if (scratch.front().first == scratch.back().first) continue;

        std::vector<double> left(static_cast<std::size_t>(n_classes), 0.0);
        std::vector<double> right = counts;
        for (int i = 0; i + 1 < count; ++i) {
          const auto& [value, label] = scratch[static_cast<std::size_t>(i)];
          left[static_cast<std::size_t>(label)] += 1.0;
          right[static_cast<std::size_t>(label)] -= 1.0;
          if (value == scratch[static_cast<std::size_t>(i + 1)].first) continue;
          const int nl = i + 1, nr = count - nl;
          if (nl < min_leaf || nr < min_leaf) continue;
          const double score = (nl * gini(left, nl) + nr * gini(right, nr)) /
                               static_cast<double>(count);
          if (score < best_score - 1e-12) {
            best_score = score;
            best_feature = feature;
            best_threshold = 0.5 * (value + scratch[static_cast<std::size_t>(i + 1)].first);
          }
        }
      }
    }

    if (best_feature < 0) {
      Vector probs(n_classes);
      for (int c = 0; c < n_classes; ++c) {
        probs(c) = counts[static_cast<std::size_t>(c)] / static_cast<double>(count);
      }
      nodes[static_cast<std::size_t>(node_index)].probs = std::move(probs);
      return node_index;
    }

    // stable partition keeps in-segment order deterministic
    std::vector<int> left_idx, right_idx;
    for (int i = begin; i < end; ++i) {
      const int row = indices[static_cast<std::size_t>(i)];
      (x(row, best_feature) <= best_threshold ? left_idx : right_idx).push_back(row);
    }
    std::copy(left_idx.begin(), left_idx.end(), indices.begin() + begin);
    std::copy(right_idx.begin(), right_idx.end(),
              indices.begin() + begin + static_cast<long>(left_idx.size()));

    nodes[static_cast<std::size_t>(node_index)].feature = best_feature;
    nodes[static_cast<std::size_t>(node_index)].threshold = best_threshold;
    const int mid = begin + static_cast<int>(left_idx.size());
    const int left_child = build(nodes, indices, begin, mid, depth + 1);
    nodes[static_cast<std::size_t>(node_index)].left = left_child;
    const int right_child = build(nodes, indices, mid, end, depth + 1);
    nodes[static_cast<std::size_t>(node_index)].right = right_child;
    return node_index;
  }
};

}  // namespace

DecisionTree train_single_tree(const Matrix& x, const std::vector<int>& labels, int n_classes,
                               int max_depth, int min_leaf, std::uint64_t seed) {
  if (x.rows() == 0) throw std::invalid_argument("train_single_tree: empty input");
  DecisionTree tree;
  tree.n_classes = n_classes;
  TreeBuilder builder(x, labels, n_classes, max_depth, std::max(1, min_leaf),
                      static_cast<int>(x.cols()), seed);
  std::vector<int> indices(static_cast<std::size_t>(x.rows()));
  std::iota(indices.begin(), indices.end(), 0);
  builder.build(tree.nodes, indices, 0, static_cast<int>(indices.size()), 0);
  return tree;
}

Vector ForestModel::predict_proba(const Vector& x) const {
  Vector probs = Vector::Zero(n_classes);
  for (const DecisionTree& tree : trees) probs += tree.leaf_probs(x);
  probs /= static_cast<double>(trees.size());
  return probs;
}

int ForestModel::predict(const Vector& x) const {
  const Vector probs = predict_proba(x);
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<int>(best);
}

ForestModel train_forest(const Matrix& x, const std::vector<int>& labels,
                         const ForestConfig& config) {
  const int n = static_cast<int>(x.rows());
  if (n == 0) throw std::invalid_argument("train_forest: empty input");
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw std::invalid_argument("train_forest: label count mismatch");
  }
  int n_classes = 1;
  for (int label : labels) {
    if (label < 0) throw std::invalid_argument("train_forest: negative label");
    n_classes = std::max(n_classes, label + 1);
  }

  ForestModel model;
  model.n_classes = n_classes;
  model.n_features = static_cast<int>(x.cols());
  model.config = config;

  const int subsample = config.feature_subsample > 0
                            ? config.feature_subsample
                            : std::max(1, static_cast<int>(std::lround(
                                              std::sqrt(static_cast<double>(x.cols())))));

  // out-of-bag vote accumulation
  Matrix oob_votes = Matrix::Zero(n, n_classes);
  std::vector<int> oob_counts(static_cast<std::size_t>(n), 0);
  std::vector<int> indices(static_cast<std::size_t>(n));
  std::vector<bool> in_bag(static_cast<std::size_t>(n));

  for (int t = 0; t < config.n_trees; ++t) {
    const std::uint64_t tree_seed = derive_seed(config.seed, static_cast<std::uint64_t>(t));
    Rng bag_rng(tree_seed);
    if (config.bootstrap) {
      std::fill(in_bag.begin(), in_bag.end(), false);
      for (int i = 0; i < n; ++i) {
        const int pick = static_cast<int>(bag_rng.below(static_cast<std::uint64_t>(n)));
        indices[static_cast<std::size_t>(i)] = pick;
        in_bag[static_cast<std::size_t>(pick)] = true;
      }
      std::sort(indices.begin(), indices.end());
    } else {
      std::iota(indices.begin(), indices.end(), 0);
      std::fill(in_bag.begin(), in_bag.end(), true);
    }

    DecisionTree tree;
    tree.n_classes = n_classes;
    TreeBuilder builder(x, labels, n_classes, config.max_depth, std::max(1, config.min_leaf),
                        subsample, derive_seed(tree_seed, 0x7ee5u));
    std::vector<int> work = indices;
    builder.build(tree.nodes, work, 0, n, 0);

    if (config.bootstrap) {
      for (int i = 0; i < n; ++i) {
        if (in_bag[static_cast<std::size_t>(i)]) continue;
        oob_votes.row(i) += tree.leaf_probs(x.row(i).transpose()).transpose();
        ++oob_counts[static_cast<std::size_t>(i)];
      }
    }
    model.trees.push_back(std::move(tree));
  }

  if (config.bootstrap) {
    int evaluated = 0, correct = 0;
    for (int i = 0; i < n; ++i) {
      if (oob_counts[static_cast<std::size_t>(i)] == 0) continue;
      ++evaluated;
      Eigen::Index best = 0;
      oob_votes.row(i).maxCoeff(&best);
      if (static_cast<int>(best) == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    if (evaluated > 0) {
      model.oob_accuracy = static_cast<double>(correct) / static_cast<double>(evaluated);
    }
  }
  return model;
}

std::string forest_to_json(const ForestModel& model) {
  json j;
  j["format_version"] = 1;
  j["n_classes"] = model.n_classes;
  j["n_features"] = model.n_features;
  j["oob_accuracy"] = model.oob_accuracy;
  j["seed"] = model.config.seed;
  j["n_trees"] = model.config.n_trees;
  j["max_depth"] = model.config.max_depth;
  j["min_leaf"] = model.config.min_leaf;
  j["feature_subsample"] = model.config.feature_subsample;
  j["bootstrap"] = model.config.bootstrap;
  json trees = json::array();
  for (const DecisionTree& tree : model.trees) {
    json nodes = json::array();
    for (const TreeNode& node : tree.nodes) {
      json nj;
      nj["feature"] = node.feature;
      nj["threshold"] = node.threshold;
      nj["left"] = node.left;
      nj["right"] = node.right;
      nj["cover"] = node.cover;
      if (node.is_leaf()) {
        json probs = json::array();
        for (Eigen::Index c = 0; c < node.probs.size(); ++c) probs.push_back(node.probs(c));
        nj["probs"] = std::move(probs);
      }
      nodes.push_back(std::move(nj));
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j.dump();
}

ForestModel forest_from_json(const std::string& text) {
  const json j = json::parse(text);
  ForestModel model;
  model.n_classes = j.at("n_classes").get<int>();
  model.n_features = j.at("n_features").get<int>();
  model.oob_accuracy = j.at("oob_accuracy").get<double>();
  model.config.seed = j.at("seed").get<std::uint64_t>();
  model.config.n_trees = j.at("n_trees").get<int>();
  model.config.max_depth = j.at("max_depth").get<int>();
  model.config.min_leaf = j.at("min_leaf").get<int>();
  model.config.feature_subsample = j.at("feature_subsample").get<int>();
  model.config.bootstrap = j.at("bootstrap").get<bool>();
  for (const auto& tj : j.at("trees")) {
    DecisionTree tree;
    tree.n_classes = model.n_classes;
    for (const auto& nj : tj) {
      TreeNode node;
      node.feature = nj.at("feature").get<int>();
      node.threshold = nj.at("threshold").get<double>();
      node.left = nj.at("left").get<int>();
      node.right = nj.at("right").get<int>();
      node.cover = nj.at("cover").get<double>();
      if (nj.contains("probs")) {
        const auto& probs = nj.at("probs");
        node.probs.resize(static_cast<Eigen::Index>(probs.size()));
        for (std::size_t c = 0; c < probs.size(); ++c) {
          node.probs(static_cast<Eigen::Index>(c)) = probs.at(c).get<double>();
        }
      }
      tree.nodes.push_back(std::move(node));
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Path-dependent TreeSHAP (Lundberg et al.'s polynomial-time algorithm).
// The path records, per unique feature on the way down, the fraction of
// subsets flowing through when the feature is excluded (zero_fraction) or
// included (one_fraction), plus a permutation weight.

namespace {

struct PathElement {
  int feature_index = -1;
  double zero_fraction = 1.0;
  double one_fraction = 1.0;
  double pweight = 1.0;
};

void extend_path(PathElement* path, int unique_depth, double zero_fraction, double one_fraction,
                 int feature_index) {
  path[unique_depth].feature_index = feature_index;
  path[unique_depth].zero_fraction = zero_fraction;
  path[unique_depth].one_fraction = one_fraction;
  path[unique_depth].pweight = unique_depth == 0 ? 1.0 : 0.0;
  for (int i = unique_depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) /
                           static_cast<double>(unique_depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (unique_depth - i) /
                      static_cast<double>(unique_depth + 1);
  }
}

void unwind_path(PathElement* path, int unique_depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[unique_depth].pweight;
  for (int i = unique_depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (unique_depth + 1) /
                        static_cast<double>((i + 1) * one_fraction);
      next_one_portion = tmp - path[i].pweight * zero_fraction * (unique_depth - i) /
                                   static_cast<double>(unique_depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (unique_depth + 1) /
                        (zero_fraction * static_cast<double>(unique_depth - i));
    }
  }
  for (int i = path_index; i < unique_depth; ++i) {
    path[i].feature_index = path[i + 1].feature_index;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_path_sum(const PathElement* path, int unique_depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[unique_depth].pweight;
  double total = 0.0;
  for (int i = unique_depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = next_one_portion * (unique_depth + 1) /
                         static_cast<double>((i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero_fraction * (unique_depth - i) /
                                               static_cast<double>(unique_depth + 1);
    } else {
      total += path[i].pweight / zero_fraction * (unique_depth + 1) /
               static_cast<double>(unique_depth - i);
    }
  }
  return total;
}

int tree_max_depth(const DecisionTree& tree, int node, int depth) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return depth;
  return std::max(tree_max_depth(tree, n.left, depth + 1),
                  tree_max_depth(tree, n.right, depth + 1));
}

void shap_recurse(const DecisionTree& tree, const Vector& x, Matrix& phi, int node_index,
                  int unique_depth, PathElement* parent_path, double parent_zero_fraction,
                  double parent_one_fraction, int parent_feature) {
  PathElement* path = parent_path + unique_depth + 1;
  std::copy(parent_path, parent_path + unique_depth + 1, path);
  extend_path(path, unique_depth, parent_zero_fraction, parent_one_fraction, parent_feature);

  const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_index)];
  if (node.is_leaf()) {
    for (int i = 1; i <= unique_depth; ++i) {
      const double w = unwound_path_sum(path, unique_depth, i);
      const PathElement& el = path[i];
      const double scale = w * (el.one_fraction - el.zero_fraction);
      phi.row(el.feature_index) += scale * node.probs.transpose();
    }
    return;
  }

  const bool go_left = x(node.feature) <= node.threshold;
  const int hot = go_left ? node.left : node.right;
  const int cold = go_left ? node.right : node.left;
  const double hot_zero = tree.nodes[static_cast<std::size_t>(hot)].cover / node.cover;
  const double cold_zero = tree.nodes[static_cast<std::size_t>(cold)].cover / node.cover;

  double incoming_zero = 1.0, incoming_one = 1.0;
  int path_index = 0;
  for (; path_index <= unique_depth; ++path_index) {
    if (path[path_index].feature_index == node.feature) break;
  }
  if (path_index != unique_depth + 1) {
    incoming_zero = path[path_index].zero_fraction;
    incoming_one = path[path_index].one_fraction;
    unwind_path(path, unique_depth, path_index);
    unique_depth -= 1;
  }

  shap_recurse(tree, x, phi, hot, unique_depth + 1, path, hot_zero * incoming_zero, incoming_one,
               node.feature);
  shap_recurse(tree, x, phi, cold, unique_depth + 1, path, cold_zero * incoming_zero, 0.0,
               node.feature);
}

}  // namespace

ShapValues tree_shap(const DecisionTree& tree, const Vector& x) {
  ShapValues out;
  out.base = tree.expected_probs();
  out.phi = Matrix::Zero(x.size(), tree.n_classes);
  const int depth = tree_max_depth(tree, 0, 0);
  std::vector<PathElement> buffer(static_cast<std::size_t>((depth + 2) * (depth + 3) / 2));
  shap_recurse(tree, x, out.phi, 0, 0, buffer.data(), 1.0, 1.0, -1);
  return out;
}

ShapValues tree_shap(const ForestModel& forest, const Vector& x) {
  ShapValues out;
  out.base = Vector::Zero(forest.n_classes);
  out.phi = Matrix::Zero(x.size(), forest.n_classes);
  for (const DecisionTree& tree : forest.trees) {
    const ShapValues per_tree = tree_shap(tree, x);
    out.base += per_tree.base;
    out.phi += per_tree.phi;
  }
  const double scale = 1.0 / static_cast<double>(forest.trees.size());
  out.base *= scale;
  out.phi *= scale;
  return out;
}

ExplainResult explain_subgroups(const ForestModel& forest, const Matrix& x,
                                const std::vector<int>& assignment,
                                const std::vector<std::string>& patient_ids,
                                const vectors::ConceptVocabulary& vocabulary,
                                const std::map<std::string, std::string>& preferred_names,
                                int top_m) {
  const Eigen::Index n = x.rows();
  const int k = forest.n_classes;
  const Eigen::Index d = x.cols();

  Matrix mean_phi = Matrix::Zero(d, k);      // signed, toward own cluster
  Matrix mean_abs_phi = Matrix::Zero(d, k);
  Matrix mean_value = Matrix::Zero(d, k);
  std::vector<double> members(static_cast<std::size_t>(k), 0.0);

  ExplainResult result;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector xi = x.row(i).transpose();
    const ShapValues shap = tree_shap(forest, xi);
    const int cluster = assignment[static_cast<std::size_t>(i)];
    members[static_cast<std::size_t>(cluster)] += 1.0;
    mean_phi.col(cluster) += shap.phi.col(cluster);
    mean_abs_phi.col(cluster) += shap.phi.col(cluster).cwiseAbs();
    mean_value.col(cluster) += xi;

    Eigen::Index predicted = 0;
    (shap.base + shap.phi.colwise().sum().transpose()).maxCoeff(&predicted);
    if (static_cast<int>(predicted) != cluster) {
      MisclassifiedPatient mp;
      mp.patient_id = patient_ids[static_cast<std::size_t>(i)];
      mp.cluster = cluster;
      mp.predicted = static_cast<int>(predicted);
      std::vector<std::pair<double, Eigen::Index>> ranked;
      for (Eigen::Index f = 0; f < d; ++f) {
        ranked.emplace_back(std::abs(shap.phi(f, predicted)), f);
      }
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (std::size_t r = 0; r < ranked.size() && r < 5; ++r) {
        const Eigen::Index f = ranked[r].second;
        mp.top_features.emplace_back(vocabulary.cui_at(static_cast<std::size_t>(f)),
                                     shap.phi(f, predicted));
      }
      result.misclassified.push_back(std::move(mp));
    }
  }

  for (int c = 0; c < k; ++c) {
    SubgroupProfile profile;
    profile.cluster = c;
    profile.n_patients = static_cast<std::size_t>(members[static_cast<std::size_t>(c)]);
    if (profile.n_patients > 0) {
      mean_phi.col(c) /= members[static_cast<std::size_t>(c)];
      mean_abs_phi.col(c) /= members[static_cast<std::size_t>(c)];
      mean_value.col(c) /= members[static_cast<std::size_t>(c)];
    }
    std::vector<Eigen::Index> order;
    for (Eigen::Index f = 0; f < d; ++f) {
      if (mean_phi(f, c) > 0.0) order.push_back(f);
    }
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (mean_phi(a, c) != mean_phi(b, c)) return mean_phi(a, c) > mean_phi(b, c);
      return a < b;
    });
    for (Eigen::Index f : order) {
      const bool present = mean_value(f, c) > 0.0;
      auto& bucket = present ? profile.presence : profile.absence;
      if (static_cast<int>(bucket.size()) >= top_m) continue;
      ProfileEntry entry;
      entry.cui = vocabulary.cui_at(static_cast<std::size_t>(f));
      const auto it = preferred_names.find(entry.cui);
      entry.preferred_name = it == preferred_names.end() ? entry.cui : it->second;
      entry.mean_abs_shap = mean_abs_phi(f, c);
      entry.direction = present ? "presence" : "absence";
      bucket.push_back(std::move(entry));
    }
    result.profiles.push_back(std::move(profile));
  }
  return result;
}

std::string explain_to_json(const ExplainResult& result) {
  json j;
  json profiles = json::array();
  for (const auto& profile : result.profiles) {
    json pj;
    pj["cluster"] = profile.cluster;
    pj["n_patients"] = profile.n_patients;
    auto dump_entries = [](const std::vector<ProfileEntry>& entries) {
      json arr = json::array();
      for (const auto& e : entries) {
        arr.push_back(json::array({e.cui, e.preferred_name, e.mean_abs_shap, e.direction}));
      }
      return arr;
    };
    pj["presence"] = dump_entries(profile.presence);
    pj["absence"] = dump_entries(profile.absence);
    profiles.push_back(std::move(pj));
  }
  j["profiles"] = std::move(profiles);
  json mis = json::array();
  for (const auto& m : result.misclassified) {
    json mj;
    mj["patient_id"] = m.patient_id;
    mj["cluster"] = m.cluster;
    mj["predicted"] = m.predicted;
    json feats = json::array();
    for (const auto& [cui, shap] : m.top_features) feats.push_back(json::array({cui, shap}));
    mj["top_features"] = std::move(feats);
    mis.push_back(std::move(mj));
  }
  j["misclassified"] = std::move(mis);
  return j.dump(2) + "\n";
}

std::string clusters_to_csv(const std::vector<std::string>& patient_ids,
                            const std::vector<int>& assignment) {
  std::string out = "patient_id,cluster\n";
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    out += patient_ids[i];
    out += ',';
    out += std::to_string(assignment[i]);
    out += '\n';
  }
  return out;
}

}  // namespace clinpath::subgroups
