#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "clinpath/mlp.hpp"
#include "clinpath/timeline.hpp"
#include "clinpath/types.hpp"

namespace clinpath::vectors {

// Ordered CUI vocabulary; vector dimension is size(). The ordering is fixed
// at build time (lexicographic) and persisted alongside derived artifacts.
class ConceptVocabulary {
 public:
  static ConceptVocabulary build(const std::vector<timeline::StageSeries>& corpus);
  static ConceptVocabulary from_cuis(std::vector<std::string> cuis);  // sorted & deduped
  static ConceptVocabulary parse(std::string_view text);              // one CUI per line
  static ConceptVocabulary load(const std::string& path);

  std::size_t size() const { return cuis_.size(); }
  int index_of(const std::string& cui) const;  // -1 when absent
  const std::string& cui_at(std::size_t i) const { return cuis_[i]; }
  const std::vector<std::string>& cuis() const { return cuis_; }
  std::string serialize() const;

 private:
  std::vector<std::string> cuis_;
  std::unordered_map<std::string, int> index_;
};

// Sparse ternary stage vector; entries hold the nonzero coordinates only.
struct TernaryVector {
  std::string patient_id;
  int stage = 1;
  std::size_t dim = 0;
  std::vector<std::pair<int, int>> entries;  // (vocab index, +-1), index ascending

  Vector dense() const;
};

// 1 for positive, -1 for negative, 0 when absent. Every stage CUI must be in
// the vocabulary.
TernaryVector build_ternary_vector(const timeline::Stage& stage, const std::string& patient_id,
                                   const ConceptVocabulary& vocabulary);

std::vector<TernaryVector> build_all_ternary_vectors(const std::vector<timeline::StageSeries>& corpus,
                                                     const ConceptVocabulary& vocabulary);

Matrix to_dense_matrix(const std::vector<TernaryVector>& vectors);

std::string ternary_to_jsonl(const std::vector<TernaryVector>& vectors);
std::vector<TernaryVector> ternary_from_jsonl(std::string_view jsonl);

struct AutoencoderConfig {
  int latent = 16;
  std::vector<int> encoder_hidden;  // empty selects the default {4 * latent}
  nnet::Activation hidden_activation = nnet::Activation::Tanh;
  int epochs = 100;
  double learning_rate = 0.05;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

struct AutoencoderModel {
  nnet::Mlp net;  // encoder stack followed by the mirrored decoder
  int input_dim = 0;
  int latent = 0;
  std::size_t encoder_layer_count = 0;
  std::vector<double> loss_curve;  // [0] = loss before training
  AutoencoderConfig config;
};

// Symmetric [V, hidden..., L, hidden reversed..., V] net trained with
// mini-batch gradient descent on mean squared reconstruction error.
// Deterministic per seed; aborts on non-finite loss.
AutoencoderModel train_autoencoder(const Matrix& rows, const AutoencoderConfig& config);

Vector encode(const AutoencoderModel& model, const Vector& input);
Matrix encode_all(const AutoencoderModel& model, const Matrix& rows);
Vector reconstruct(const AutoencoderModel& model, const Vector& input);
double reconstruction_mse(const AutoencoderModel& model, const Matrix& rows);

std::string model_to_json(const AutoencoderModel& model);
AutoencoderModel model_from_json(const std::string& text);

struct DenseVector {
  std::string patient_id;
  int stage = 1;
  Vector values;
};

std::vector<DenseVector> encode_vectors(const AutoencoderModel& model,
                                        const std::vector<TernaryVector>& vectors);

// patient_id,stage,v_1..v_L
std::string dense_to_csv(const std::vector<DenseVector>& vectors);
std::vector<DenseVector> dense_from_csv(std::string_view csv);

}  // namespace clinpath::vectors
