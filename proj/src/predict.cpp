#include "clinpath/predict.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "clinpath/rng.hpp"

namespace clinpath::predict {

using nlohmann::json;

std::optional<int> state_class_of(pathways::Outcome o) {
  switch (o) {
    case pathways::Outcome::Improve: return 0;
    case pathways::Outcome::Persistent: return 1;
    case pathways::Outcome::Deteriorate: return 2;
    default: return std::nullopt;
  }
}

std::string_view state_class_name(int cls) {
  switch (cls) {
    case 0: return "Improve";
    case 1: return "Persistent";
    case 2: return "Deteriorate";
  }
  return "?";
}

EvalMetrics evaluate(const std::vector<int>& truth, const std::vector<int>& predicted,
                     int n_classes) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("evaluate: size mismatch");
  EvalMetrics m;
  m.confusion = Matrix::Zero(n_classes, n_classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    m.confusion(truth[i], predicted[i]) += 1.0;
    if (truth[i] == predicted[i]) ++correct;
  }
  m.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  m.precision.resize(static_cast<std::size_t>(n_classes), 0.0);
  m.recall.resize(static_cast<std::size_t>(n_classes), 0.0);
  for (int c = 0; c < n_classes; ++c) {
    const double col = m.confusion.col(c).sum();
    const double row = m.confusion.row(c).sum();
    if (col > 0.0) m.precision[static_cast<std::size_t>(c)] = m.confusion(c, c) / col;
    if (row > 0.0) m.recall[static_cast<std::size_t>(c)] = m.confusion(c, c) / row;
  }
  m.n_test = truth.size();
  return m;
}

std::pair<std::vector<int>, std::vector<int>> stratified_split(const std::vector<int>& labels,
                                                               double holdout_fraction,
                                                               std::uint64_t seed) {
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(static_cast<int>(i));
  }
  std::vector<int> train, test;
  Rng rng(seed);
  for (auto& [label, members] : by_class) {
    rng.shuffle(members);
    // at least one training sample per class
    std::size_t n_test = static_cast<std::size_t>(
        holdout_fraction * static_cast<double>(members.size()));
    if (n_test >= members.size()) n_test = members.size() - 1;
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < n_test ? test : train).push_back(members[i]);
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

namespace {

Matrix gather_rows(const Matrix& x, const std::vector<int>& indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), x.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(indices[i]);
  }
  return out;
}

std::vector<int> gather(const std::vector<int>& values, const std::vector<int>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(values[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

int SubgroupClassifier::predict_subgroup(const Vector& stage1_ternary) const {
  return model.predict(stage1_ternary);
}

SubgroupClassifier train_subgroup_classifier(const Matrix& x, const std::vector<int>& labels,
                                             const SubgroupClassifierConfig& config) {
  int n_subgroups = 0;
  for (int label : labels) n_subgroups = std::max(n_subgroups, label + 1);
  if (n_subgroups < 2) {
    throw std::invalid_argument("train_subgroup_classifier: need at least two subgroups");
  }

  const auto [train_idx, test_idx] = stratified_split(labels, config.holdout_fraction, config.seed);
  const Matrix x_train = gather_rows(x, train_idx);
  const std::vector<int> y_train = gather(labels, train_idx);

  SubgroupClassifier out;
  out.kind = config.kind;
  out.n_subgroups = n_subgroups;
  if (config.kind == ClassifierKind::RandomForest) {
    subgroups::ForestConfig fc = config.forest;
    fc.seed = config.seed;
    out.model = subgroups::train_forest(x_train, y_train, fc);
  } else {
    subgroups::ForestModel single;
    single.n_classes = n_subgroups;
    single.n_features = static_cast<int>(x.cols());
    single.config = config.forest;
    single.config.n_trees = 1;
    single.config.bootstrap = false;
    single.trees.push_back(subgroups::train_single_tree(
        x_train, y_train, n_subgroups, config.forest.max_depth, config.forest.min_leaf,
        config.seed));
    out.model = std::move(single);
  }

  std::vector<int> predicted;
  predicted.reserve(test_idx.size());
  for (int i : test_idx) {
    predicted.push_back(out.model.predict(x.row(i).transpose()));
  }
  out.heldout = evaluate(gather(labels, test_idx), predicted, n_subgroups);
  out.heldout.n_train = train_idx.size();
  return out;
}

Vector StateClassifier::predict_proba(const Vector& representation, int subgroup) const {
  Vector input(representation_dim + (with_subgroup_feature ? n_subgroups : 0));
  input.head(representation_dim) = representation;
  if (with_subgroup_feature) {
    input.tail(n_subgroups).setZero();
    if (subgroup >= 0 && subgroup < n_subgroups) input(representation_dim + subgroup) = 1.0;
  }
  return nnet::softmax_rows(net.forward(input.transpose())).row(0).transpose();
}

StateClassifier train_state_classifier(const Matrix& representations,
                                       const std::vector<int>& subgroup_labels,
                                       const std::vector<int>& state_labels,
                                       const StateClassifierConfig& config) {
  const Eigen::Index n = representations.rows();
  if (static_cast<std::size_t>(n) != state_labels.size() ||
      static_cast<std::size_t>(n) != subgroup_labels.size()) {
    throw std::invalid_argument("train_state_classifier: size mismatch");
  }
  int n_subgroups = 0;
  for (int s : subgroup_labels) n_subgroups = std::max(n_subgroups, s + 1);

  const auto [train_idx, test_idx] =
      stratified_split(state_labels, config.holdout_fraction, config.seed);

  // every class must appear in the training rows
  std::vector<int> class_counts(kStateClassCount, 0);
  for (int i : train_idx) ++class_counts[static_cast<std::size_t>(state_labels[static_cast<std::size_t>(i)])];
  for (int c = 0; c < kStateClassCount; ++c) {
    if (class_counts[static_cast<std::size_t>(c)] == 0) {
      std::string message = "train_state_classifier: class absent from training data (";
      for (int j = 0; j < kStateClassCount; ++j) {
        message += std::string(state_class_name(j)) + "=" +
                   std::to_string(class_counts[static_cast<std::size_t>(j)]) +
                   (j + 1 < kStateClassCount ? ", " : ")");
      }
      throw std::runtime_error(message);
    }
  }

  StateClassifier out;
  out.with_subgroup_feature = config.with_subgroup_feature;
  out.n_subgroups = n_subgroups;
  out.representation_dim = static_cast<int>(representations.cols());

  const int input_dim = out.representation_dim + (config.with_subgroup_feature ? n_subgroups : 0);
  Matrix features = Matrix::Zero(n, input_dim);
  features.leftCols(out.representation_dim) = representations;
  if (config.with_subgroup_feature) {
    for (Eigen::Index i = 0; i < n; ++i) {
      features(i, out.representation_dim + subgroup_labels[static_cast<std::size_t>(i)]) = 1.0;
    }
  }

  std::vector<int> sizes{input_dim};
  for (int h : config.hidden) sizes.push_back(h);
  sizes.push_back(kStateClassCount);
  std::vector<nnet::Activation> acts(sizes.size() - 1, nnet::Activation::Tanh);
  acts.back() = nnet::Activation::Linear;  // raw scores; softmax lives in the loss
  out.net = nnet::make_mlp(sizes, acts, nnet::LossKind::SoftmaxCrossEntropy, config.seed);

  Matrix x_train = gather_rows(features, train_idx);
  Matrix y_train = Matrix::Zero(static_cast<Eigen::Index>(train_idx.size()), kStateClassCount);
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    y_train(static_cast<Eigen::Index>(i), state_labels[static_cast<std::size_t>(train_idx[i])]) = 1.0;
  }

  nnet::SgdConfig sgd;
  sgd.epochs = config.epochs;
  sgd.learning_rate = config.learning_rate;
  sgd.batch_size = config.batch_size;
  sgd.seed = derive_seed(config.seed, 0xabcdu);
  out.loss_curve = nnet::train_sgd(out.net, x_train, y_train, sgd);

  std::vector<int> predicted;
  predicted.reserve(test_idx.size());
  for (int i : test_idx) {
    const Matrix probs = out.net.predict_proba(features.row(i));
    Eigen::Index best = 0;
    probs.row(0).maxCoeff(&best);
    predicted.push_back(static_cast<int>(best));
  }
  out.heldout = evaluate(gather(state_labels, test_idx), predicted, kStateClassCount);
  out.heldout.n_train = train_idx.size();
  return out;
}

PathwayPrediction predict_pathway(const Vector& stage1_ternary, const Vector& representation,
                                  const SubgroupClassifier& subgroup_model,
                                  const StateClassifier& state_model,
                                  const std::vector<pathways::TransitionMatrix>& networks) {
  if (subgroup_model.model.trees.empty() || state_model.net.layers.empty()) {
    throw std::invalid_argument("predict_pathway: untrained models");
  }
  PathwayPrediction out;
  out.subgroup = subgroup_model.predict_subgroup(stage1_ternary);
  out.state_distribution = state_model.predict_proba(representation, out.subgroup);
  for (const auto& m : networks) {
    if (m.subgroup == out.subgroup) out.network.push_back(&m);
  }
  return out;
}

std::string metrics_to_json(const EvalMetrics& m) {
  json j;
  j["accuracy"] = m.accuracy;
  j["n_train"] = m.n_train;
  j["n_test"] = m.n_test;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  json confusion = json::array();
  for (Eigen::Index r = 0; r < m.confusion.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.confusion.cols(); ++c) row.push_back(m.confusion(r, c));
    confusion.push_back(std::move(row));
  }
  j["confusion"] = std::move(confusion);
  return j.dump();
}

}  // namespace clinpath::predict
