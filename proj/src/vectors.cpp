#include "clinpath/vectors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "clinpath/io_util.hpp"

namespace clinpath::vectors {

using nlohmann::json;

ConceptVocabulary ConceptVocabulary::from_cuis(std::vector<std::string> cuis) {
  std::sort(cuis.begin(), cuis.end());
  cuis.erase(std::unique(cuis.begin(), cuis.end()), cuis.end());
  ConceptVocabulary v;
  v.cuis_ = std::move(cuis);
  for (std::size_t i = 0; i < v.cuis_.size(); ++i) v.index_[v.cuis_[i]] = static_cast<int>(i);
  return v;
}

ConceptVocabulary ConceptVocabulary::build(const std::vector<timeline::StageSeries>& corpus) {
  std::set<std::string> cuis;
  for (const auto& series : corpus) {
    for (const auto& stage : series.stages) {
      for (const auto& [cui, _] : stage.conditions) cuis.insert(cui);
    }
  }
  if (cuis.empty()) throw std::runtime_error("build_vocabulary: empty corpus");
  return from_cuis(std::vector<std::string>(cuis.begin(), cuis.end()));
}

ConceptVocabulary ConceptVocabulary::parse(std::string_view text) {
  std::vector<std::string> cuis;
  for (const std::string_view raw : split_lines(text)) {
    const std::string_view line = trim(raw);
    if (!line.empty()) cuis.emplace_back(line);
  }
  if (cuis.empty()) throw std::runtime_error("vocabulary: no entries");
  return from_cuis(std::move(cuis));
}

ConceptVocabulary ConceptVocabulary::load(const std::string& path) {
  return parse(read_file(path));
}

int ConceptVocabulary::index_of(const std::string& cui) const {
  const auto it = index_.find(cui);
  return it == index_.end() ? -1 : it->second;
}

std::string ConceptVocabulary::serialize() const {
  std::string out;
  for (const auto& cui : cuis_) {
    out += cui;
    out += '\n';
  }
  return out;
}

Vector TernaryVector::dense() const {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (const auto& [idx, val] : entries) v(idx) = static_cast<double>(val);
  return v;
}

TernaryVector build_ternary_vector(const timeline::Stage& stage, const std::string& patient_id,
                                   const ConceptVocabulary& vocabulary) {
  TernaryVector out;
  out.patient_id = patient_id;
  out.stage = stage.index;
  out.dim = vocabulary.size();
  for (const auto& [cui, polarity] : stage.conditions) {
    const int idx = vocabulary.index_of(cui);
    if (idx < 0) {
      throw std::runtime_error("build_ternary_vector: cui not in vocabulary: " + cui);
    }
    out.entries.emplace_back(idx, polarity == Polarity::Positive ? 1 : -1);
  }
  std::sort(out.entries.begin(), out.entries.end());
  return out;
}

std::vector<TernaryVector> build_all_ternary_vectors(const std::vector<timeline::StageSeries>& corpus,
                                                     const ConceptVocabulary& vocabulary) {
  std::vector<TernaryVector> out;
  for (const auto& series : corpus) {
    for (const auto& stage : series.stages) {
      out.push_back(build_ternary_vector(stage, series.patient_id, vocabulary));
    }
  }
  return out;
}

Matrix to_dense_matrix(const std::vector<TernaryVector>& vectors) {
  if (vectors.empty()) return Matrix();
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(vectors.size()),
                          static_cast<Eigen::Index>(vectors.front().dim));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (const auto& [idx, val] : vectors[i].entries) {
      m(static_cast<Eigen::Index>(i), idx) = static_cast<double>(val);
    }
  }
  return m;
}

std::string ternary_to_jsonl(const std::vector<TernaryVector>& vectors) {
  std::string out;
  for (const auto& v : vectors) {
    json j;
    j["patient_id"] = v.patient_id;
    j["stage"] = v.stage;
    j["dim"] = v.dim;
    json entries = json::array();
    for (const auto& [idx, val] : v.entries) entries.push_back(json::array({idx, val}));
    j["entries"] = std::move(entries);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<TernaryVector> ternary_from_jsonl(std::string_view jsonl) {
  std::vector<TernaryVector> out;
  for (const std::string_view raw : split_lines(jsonl)) {
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    json j = json::parse(line);
    TernaryVector v;
    v.patient_id = j.at("patient_id").get<std::string>();
    v.stage = j.at("stage").get<int>();
    v.dim = j.at("dim").get<std::size_t>();
    for (const auto& e : j.at("entries")) {
      v.entries.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    out.push_back(std::move(v));
  }
  return out;
}

AutoencoderModel train_autoencoder(const Matrix& rows, const AutoencoderConfig& config) {
  if (rows.rows() < 1) throw std::invalid_argument("train_autoencoder: need at least one vector");
  const int input_dim = static_cast<int>(rows.cols());
  if (config.latent < 1) throw std::invalid_argument("train_autoencoder: latent must be positive");
  if (config.latent > input_dim) {
    throw std::invalid_argument("train_autoencoder: latent larger than input dimension");
  }

  std::vector<int> hidden = config.encoder_hidden;
  if (hidden.empty() && config.latent < input_dim) hidden = {4 * config.latent};

  std::vector<int> sizes;
  sizes.push_back(input_dim);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(config.latent);
  for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) sizes.push_back(*it);
  sizes.push_back(input_dim);

  std::vector<nnet::Activation> acts(sizes.size() - 1, config.hidden_activation);
  acts.back() = nnet::Activation::Linear;  // targets live in [-1, 1]

  AutoencoderModel model;
  model.input_dim = input_dim;
  model.latent = config.latent;
  model.encoder_layer_count = hidden.size() + 1;
  model.config = config;
  model.net = nnet::make_mlp(sizes, acts, nnet::LossKind::MeanSquaredError, config.seed);

  nnet::SgdConfig sgd;
  sgd.epochs = config.epochs;
  sgd.learning_rate = config.learning_rate;
  sgd.batch_size = config.batch_size;
  sgd.seed = config.seed ^ 0x5bd1e995u;
  model.loss_curve = nnet::train_sgd(model.net, rows, rows, sgd);
  return model;
}

Vector encode(const AutoencoderModel& model, const Vector& input) {
  if (input.size() != model.input_dim) {
    throw std::invalid_argument("encode: dimension mismatch");
  }
  Matrix row = input.transpose();
  return model.net.forward_through(row, model.encoder_layer_count - 1).row(0).transpose();
}

Matrix encode_all(const AutoencoderModel& model, const Matrix& rows) {
  if (rows.cols() != model.input_dim) {
    throw std::invalid_argument("encode_all: dimension mismatch");
  }
  return model.net.forward_through(rows, model.encoder_layer_count - 1);
}

Vector reconstruct(const AutoencoderModel& model, const Vector& input) {
  if (input.size() != model.input_dim) {
    throw std::invalid_argument("reconstruct: dimension mismatch");
  }
  return model.net.forward_one(input);
}

double reconstruction_mse(const AutoencoderModel& model, const Matrix& rows) {
  return model.net.loss_value(rows, rows);
}

std::string model_to_json(const AutoencoderModel& model) {
  json j;
  j["format_version"] = 1;
  j["input_dim"] = model.input_dim;
  j["latent"] = model.latent;
  j["encoder_layer_count"] = model.encoder_layer_count;
  j["seed"] = model.config.seed;
  j["epochs"] = model.config.epochs;
  j["learning_rate"] = model.config.learning_rate;
  j["batch_size"] = model.config.batch_size;
  j["loss_curve"] = model.loss_curve;
  j["net"] = json::parse(nnet::to_json(model.net));
  return j.dump();
}

AutoencoderModel model_from_json(const std::string& text) {
  const json j = json::parse(text);
  AutoencoderModel model;
  model.input_dim = j.at("input_dim").get<int>();
  model.latent = j.at("latent").get<int>();
  model.encoder_layer_count = j.at("encoder_layer_count").get<std::size_t>();
  model.config.seed = j.at("seed").get<std::uint64_t>();
  model.config.epochs = j.at("epochs").get<int>();
  model.config.learning_rate = j.at("learning_rate").get<double>();
  model.config.batch_size = j.at("batch_size").get<int>();
  model.config.latent = model.latent;
  model.loss_curve = j.at("loss_curve").get<std::vector<double>>();
  model.net = nnet::mlp_from_json(j.at("net").dump());
  return model;
}

std::vector<DenseVector> encode_vectors(const AutoencoderModel& model,
                                        const std::vector<TernaryVector>& vectors) {
  const Matrix rows = to_dense_matrix(vectors);
  const Matrix encoded = encode_all(model, rows);
  std::vector<DenseVector> out;
  out.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    DenseVector d;
    d.patient_id = vectors[i].patient_id;
    d.stage = vectors[i].stage;
    d.values = encoded.row(static_cast<Eigen::Index>(i)).transpose();
    out.push_back(std::move(d));
  }
  return out;
}

std::string dense_to_csv(const std::vector<DenseVector>& vectors) {
  std::string out = "patient_id,stage";
  const Eigen::Index dim = vectors.empty() ? 0 : vectors.front().values.size();
  for (Eigen::Index i = 1; i <= dim; ++i) out += ",v_" + std::to_string(i);
  out += '\n';
  char buf[40];
  for (const auto& v : vectors) {
    out += v.patient_id;
    out += ',';
    out += std::to_string(v.stage);
    for (Eigen::Index i = 0; i < v.values.size(); ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v.values(i));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::vector<DenseVector> dense_from_csv(std::string_view csv) {
  std::vector<DenseVector> out;
  const auto lines = split_lines(csv);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() < 2) continue;
    DenseVector v;
    v.patient_id = fields[0];
    v.stage = std::stoi(fields[1]);
    v.values.resize(static_cast<Eigen::Index>(fields.size() - 2));
    for (std::size_t f = 2; f < fields.size(); ++f) {
      v.values(static_cast<Eigen::Index>(f - 2)) = std::stod(fields[f]);
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace clinpath::vectors
