#pragma once

// Independent test oracles. Everything here is deliberately brute force and
// kept apart from the library implementations it checks.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clinpath/rng.hpp"
#include "clinpath/severity.hpp"
#include "clinpath/subgroups.hpp"
#include "clinpath/types.hpp"

namespace oracles {

// Full-matrix Levenshtein, no row reuse.
inline std::size_t levenshtein_full_matrix(std::string_view a, std::string_view b) {
  const std::size_t na = a.size(), nb = b.size();
  std::vector<std::vector<std::size_t>> d(na + 1, std::vector<std::size_t>(nb + 1, 0));
  for (std::size_t i = 0; i <= na; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= nb; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= na; ++i) {
    for (std::size_t j = 1; j <= nb; ++j) {
      const std::size_t del = d[i - 1][j] + 1;
      const std::size_t ins = d[i][j - 1] + 1;
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({del, ins, sub});
    }
  }
  return d[na][nb];
}

// ---------------------------------------------------------------------------
// Brute-force Shapley values with the tree-conditional expectation, matching
// the path-dependent feature perturbation.

// E[f(x) | features in S fixed to x]
inline clinpath::Vector tree_expectation(const clinpath::subgroups::DecisionTree& tree, int node,
                                         const clinpath::Vector& x,
                                         const std::vector<bool>& in_set) {
  const auto& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return n.probs;
  if (in_set[static_cast<std::size_t>(n.feature)]) {
    return tree_expectation(tree, x(n.feature) <= n.threshold ? n.left : n.right, x, in_set);
  }
  const double wl = tree.nodes[static_cast<std::size_t>(n.left)].cover / n.cover;
  const double wr = tree.nodes[static_cast<std::size_t>(n.right)].cover / n.cover;
  return wl * tree_expectation(tree, n.left, x, in_set) +
         wr * tree_expectation(tree, n.right, x, in_set);
}

// Exact Shapley by enumeration over the features used in the tree (features
// absent from the tree are null players and keep value 0).
inline clinpath::Matrix shapley_enumeration(const clinpath::subgroups::DecisionTree& tree,
                                            const clinpath::Vector& x) {
  std::vector<int> used;
  for (const auto& n : tree.nodes) {
    if (!n.is_leaf() && std::find(used.begin(), used.end(), n.feature) == used.end()) {
      used.push_back(n.feature);
    }
  }
  std::sort(used.begin(), used.end());
  const int m = static_cast<int>(used.size());
  clinpath::Matrix phi = clinpath::Matrix::Zero(x.size(), tree.n_classes);
  if (m == 0) return phi;

  std::vector<double> factorial(static_cast<std::size_t>(m) + 1, 1.0);
  for (int i = 1; i <= m; ++i) {
    factorial[static_cast<std::size_t>(i)] = factorial[static_cast<std::size_t>(i - 1)] * i;
  }

  std::vector<bool> in_set(static_cast<std::size_t>(x.size()), false);
  for (int fi = 0; fi < m; ++fi) {
    const int feature = used[static_cast<std::size_t>(fi)];
    for (unsigned mask = 0; mask < (1u << m); ++mask) {
      if (mask & (1u << fi)) continue;  // subsets excluding the feature
      std::fill(in_set.begin(), in_set.end(), false);
      int subset_size = 0;
      for (int j = 0; j < m; ++j) {
        if (mask & (1u << j)) {
          in_set[static_cast<std::size_t>(used[static_cast<std::size_t>(j)])] = true;
          ++subset_size;
        }
      }
      const clinpath::Vector without = tree_expectation(tree, 0, x, in_set);
      in_set[static_cast<std::size_t>(feature)] = true;
      const clinpath::Vector with = tree_expectation(tree, 0, x, in_set);
      const double weight = factorial[static_cast<std::size_t>(subset_size)] *
                            factorial[static_cast<std::size_t>(m - subset_size - 1)] /
                            factorial[static_cast<std::size_t>(m)];
      phi.row(feature) += weight * (with - without).transpose();
    }
  }
  return phi;
}

// Random tree with consistent covers for oracle comparisons.
inline clinpath::subgroups::DecisionTree random_tree(clinpath::Rng& rng, int n_features,
                                                     int max_depth) {
  using clinpath::subgroups::DecisionTree;
  using clinpath::subgroups::TreeNode;
  DecisionTree tree;
  tree.n_classes = 2;

  // grow recursively; covers split randomly but stay >= 1 on both sides
  struct Grower {
    clinpath::Rng& rng;
    int n_features, max_depth;
    DecisionTree& tree;

    int grow(int depth, double cover) {
      const int index = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes[static_cast<std::size_t>(index)].cover = cover;
      const bool leaf = depth >= max_depth || cover < 2.0 || rng.bernoulli(0.25 * depth);
      if (leaf) {
        const double p = rng.uniform();
        clinpath::Vector probs(2);
        probs << p, 1.0 - p;
        tree.nodes[static_cast<std::size_t>(index)].probs = probs;
        return index;
      }
      const int feature = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_features)));
      // thresholds fall between the ternary levels
      const double threshold = rng.bernoulli(0.5) ? -0.5 : 0.5;
      const double left_cover = 1.0 + std::floor(rng.uniform() * (cover - 1.0));
      const int left = grow(depth + 1, left_cover);
      const int right = grow(depth + 1, cover - left_cover);
      auto& node = tree.nodes[static_cast<std::size_t>(index)];
      node.feature = feature;
      node.threshold = threshold;
      node.left = left;
      node.right = right;
      return index;
    }
  };
  Grower grower{rng, n_features, max_depth, tree};
  grower.grow(0, 64.0 + static_cast<double>(rng.below(64)));
  return tree;
}

// ---------------------------------------------------------------------------
// Hand-written severity ladder, written straight from the four-state
// definition rather than sharing code with the implementation.

inline clinpath::severity::SepsisState severity_truth_table(bool infection, bool organ,
                                                            bool hypo_flag, bool fluids,
                                                            std::optional<int> sirs,
                                                            bool hypo_vitals) {
  using clinpath::severity::SepsisState;
  const bool hypotensive = hypo_flag || hypo_vitals;
  if (infection && organ && hypotensive && fluids) return SepsisState::SepticShock;
  if (infection && organ) return SepsisState::SevereSepsis;
  if (sirs.has_value() && *sirs >= 2) {
    return infection ? SepsisState::Sepsis : SepsisState::Sirs;
  }
  return SepsisState::Unknown;
}

// ---------------------------------------------------------------------------
// Adjusted Rand index between two labelings.

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
  }
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [_, v] : joint) sum_joint += choose2(v);
  for (const auto& [_, v] : ca) sum_a += choose2(v);
  for (const auto& [_, v] : cb) sum_b += choose2(v);
  const double total = choose2(static_cast<double>(n));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_joint - expected) / (max_index - expected);
}

// Rank-2 ternary dataset: every row is one of two random ternary prototypes.
inline clinpath::Matrix rank2_ternary(int n, int dim, std::uint64_t seed) {
  clinpath::Rng rng(seed);
  clinpath::Matrix prototypes(2, dim);
  for (int p = 0; p < 2; ++p) {
    for (int j = 0; j < dim; ++j) {
      const double u = rng.uniform();
      prototypes(p, j) = u < 0.4 ? 1.0 : (u < 0.7 ? -1.0 : 0.0);
    }
  }
  clinpath::Matrix rows(n, dim);
  for (int i = 0; i < n; ++i) rows.row(i) = prototypes.row(rng.bernoulli(0.5) ? 1 : 0);
  return rows;
}

}  // namespace oracles
