#pragma once

#include <random>
#include <span>
#include <vector>

#include "scriptcl/autodiff.hpp"
#include "scriptcl/encoding.hpp"
#include "scriptcl/script_data.hpp"

namespace scriptcl {

double cosine_similarity(const ad::Vector& u, const ad::Vector& v);

struct ContrastiveConfig {
  double temperature = 0.1;
  void validate() const;
};

// Which rows form the positive pairs. anchor_rows and positive_rows index
// into the anchor-side and positive-side embedding blocks respectively.
struct PairSelection {
  std::vector<CharacterId> characters;
  std::vector<int> anchor_rows;
  std::vector<int> positive_rows;
  std::size_t size() const { return characters.size(); }
  bool empty() const { return characters.empty(); }
};

// Row i of `anchors` and row i of `positives` describe the same character;
// every other positive acts as an in-set negative for anchor i.
struct PairSet {
  ad::Var anchors;
  ad::Var positives;
  std::vector<EmbeddingTag> anchor_tags;
  std::vector<EmbeddingTag> positive_tags;
  std::size_t size() const { return anchor_tags.size(); }
  bool empty() const { return anchor_tags.empty(); }
};

PairSet build_pair_set(const EmbeddingSet& anchor_side, const EmbeddingSet& positive_side,
                       const PairSelection& selection);

// One conversation-side anchor and one summary-side positive per shared
// character, each drawn uniformly among that character's representations.
// Shared characters missing on either side are skipped.
PairSelection select_summary_conversation_pairs(const AlignedSample& sample,
                                                std::span<const EmbeddingTag> conversation,
                                                std::span<const EmbeddingTag> summary, std::mt19937_64& rng);
PairSet sample_summary_conversation_pairs(const AlignedSample& sample, const EmbeddingSet& conversation,
                                          const EmbeddingSet& summary, std::mt19937_64& rng);

// For each character present in at least two samples, one pair of
// representations drawn uniformly among pairs with different sample indices.
// Rows index into `pooled` on both sides. Unlabelled rows (character -1) and,
// when a registry is given, its reserved labels never form pairs.
PairSelection select_cross_pairs(std::span<const EmbeddingTag> pooled, std::mt19937_64& rng,
                                 const CharacterRegistry* registry = nullptr);
// Concatenates the batch and samples as above.
PairSet sample_cross_pairs(std::span<const EmbeddingSet> batch, std::mt19937_64& rng,
                           const CharacterRegistry* registry = nullptr);
EmbeddingSet concat_embeddings(std::span<const EmbeddingSet> parts);

// Sum over anchors of -log softmax_j(cos(a_i, p_j) / tau)[i].
ad::Var info_nce(const ad::Var& anchors, const ad::Var& positives, double temperature);
ad::Var summary_conversation_loss(const PairSet& pairs, const ContrastiveConfig& cfg);
ad::Var cross_sample_loss(const PairSet& pairs, const ContrastiveConfig& cfg);

struct HeadConfig {
  int hidden_width = 32;
};

// FFN classifier: tanh hidden layer, then a linear map to registry logits.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(ParameterStore& store, const std::string& prefix, int d, std::size_t n_classes,
                 const HeadConfig& cfg, std::mt19937_64& rng);
  ad::Var logits(const ad::Var& embeddings) const;  // n x d -> n x |Z|
  int input_size() const { return d_; }
  std::size_t n_classes() const { return n_classes_; }

 private:
  int d_ = 0;
  std::size_t n_classes_ = 0;
  ad::Var w1_, b1_, w2_, b2_;
};

ad::Vector classify(const ad::Vector& embedding, const ClassifierHead& head);
ad::Vector softmax(const ad::Vector& logits);

// Mean over examples of -log p[label].
double supervised_loss(std::span<const ad::Vector> probabilities, std::span<const int> labels);
ad::Var supervised_loss_from_logits(const ad::Var& logits, std::span<const int> labels);

}  // namespace scriptcl
