#include "scriptcl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "scriptcl/error.hpp"

namespace scriptcl {

double cosine_similarity(const ad::Vector& u, const ad::Vector& v) {
  if (u.size() == 0 || u.size() != v.size()) throw DimensionMismatch("cosine_similarity of mismatched vectors");
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw ZeroVector("cosine_similarity of a zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidConfig("temperature must be finite and > 0");
  }
}

PairSet build_pair_set(const EmbeddingSet& anchor_side, const EmbeddingSet& positive_side,
                       const PairSelection& selection) {
  PairSet pairs;
  if (selection.empty()) return pairs;
  pairs.anchors = ad::gather_rows(anchor_side.vectors, selection.anchor_rows);
  pairs.positives = ad::gather_rows(positive_side.vectors, selection.positive_rows);
  for (std::size_t i = 0; i < selection.size(); ++i) {
    pairs.anchor_tags.push_back(anchor_side.tags.at(static_cast<std::size_t>(selection.anchor_rows[i])));
    pairs.positive_tags.push_back(positive_side.tags.at(static_cast<std::size_t>(selection.positive_rows[i])));
  }
  return pairs;
}

namespace {

int pick(const std::vector<int>& options, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, options.size() - 1);
  return options[dist(rng)];
}

std::vector<int> rows_of(std::span<const EmbeddingTag> tags, CharacterId c) {
  std::vector<int> rows;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].character == c) rows.push_back(static_cast<int>(i));
  }
  return rows;
}

}  // namespace

PairSelection select_summary_conversation_pairs(const AlignedSample& sample,
                                                std::span<const EmbeddingTag> conversation,
                                                std::span<const EmbeddingTag> summary, std::mt19937_64& rng) {
  PairSelection sel;
  for (CharacterId c : sample.shared_characters) {
    const auto conv_rows = rows_of(conversation, c);
    const auto sum_rows = rows_of(summary, c);
    if (conv_rows.empty() || sum_rows.empty()) continue;
    sel.characters.push_back(c);
    sel.anchor_rows.push_back(pick(conv_rows, rng));
    sel.positive_rows.push_back(pick(sum_rows, rng));
  }
  return sel;
}

PairSet sample_summary_conversation_pairs(const AlignedSample& sample, const EmbeddingSet& conversation,
                                          const EmbeddingSet& summary, std::mt19937_64& rng) {
  return build_pair_set(conversation, summary,
                        select_summary_conversation_pairs(sample, conversation.tags, summary.tags, rng));
}

PairSelection select_cross_pairs(std::span<const EmbeddingTag> pooled, std::mt19937_64& rng,
                                 const CharacterRegistry* registry) {
  std::map<CharacterId, std::vector<int>> by_character;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const CharacterId c = pooled[i].character;
    if (c < 0 || (registry && registry->is_reserved(c))) continue;
    by_character[c].push_back(static_cast<int>(i));
  }
  PairSelection sel;
  for (const auto& [c, rows] : by_character) {
    std::vector<std::pair<int, int>> valid;
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = a + 1; b < rows.size(); ++b) {
        if (pooled[static_cast<std::size_t>(rows[a])].sample_index !=
            pooled[static_cast<std::size_t>(rows[b])].sample_index) {
          valid.emplace_back(rows[a], rows[b]);
        }
      }
    }
    if (valid.empty()) continue;
    auto [first, second] = valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng)];
    if (std::bernoulli_distribution(0.5)(rng)) std::swap(first, second);
    sel.characters.push_back(c);
    sel.anchor_rows.push_back(first);
    sel.positive_rows.push_back(second);
  }
  return sel;
}

EmbeddingSet concat_embeddings(std::span<const EmbeddingSet> parts) {
  EmbeddingSet out;
  std::vector<ad::Var> blocks;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    blocks.push_back(p.vectors);
    out.tags.insert(out.tags.end(), p.tags.begin(), p.tags.end());
  }
  if (!blocks.empty()) out.vectors = blocks.size() == 1 ? blocks.front() : ad::concat_rows(blocks);
  return out;
}

PairSet sample_cross_pairs(std::span<const EmbeddingSet> batch, std::mt19937_64& rng,
                           const CharacterRegistry* registry) {
  const EmbeddingSet pooled = concat_embeddings(batch);
  return build_pair_set(pooled, pooled, select_cross_pairs(pooled.tags, rng, registry));
}

ad::Var info_nce(const ad::Var& anchors, const ad::Var& positives, double temperature) {
  if (anchors.rows() == 0) throw EmptyPairSet("InfoNCE over zero pairs");
  if (anchors.rows() != positives.rows() || anchors.cols() != positives.cols()) {
    throw DimensionMismatch("anchors and positives must have the same shape");
  }
  const ad::Var sims = ad::matmul(ad::l2_normalize_rows(anchors), ad::transpose(ad::l2_normalize_rows(positives)));
  const ad::Var log_probs = ad::log_softmax_rows(ad::scale(sims, 1.0 / temperature));
  std::vector<int> diagonal(static_cast<std::size_t>(anchors.rows()));
  std::iota(diagonal.begin(), diagonal.end(), 0);
  return ad::scale(ad::pick_sum(log_probs, diagonal), -1.0);
}

ad::Var summary_conversation_loss(const PairSet& pairs, const ContrastiveConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw EmptyPairSet("summary-conversation loss needs P >= 1");
  return info_nce(pairs.anchors, pairs.positives, cfg.temperature);
}

ad::Var cross_sample_loss(const PairSet& pairs, const ContrastiveConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw EmptyPairSet("cross-sample loss needs K >= 1");
  return info_nce(pairs.anchors, pairs.positives, cfg.temperature);
}

ClassifierHead::ClassifierHead(ParameterStore& store, const std::string& prefix, int d, std::size_t n_classes,
                               const HeadConfig& cfg, std::mt19937_64& rng)
    : d_(d), n_classes_(n_classes) {
  if (cfg.hidden_width < 1 || n_classes == 0) throw InvalidConfig("classifier head sizes must be positive");
  const auto classes = static_cast<Eigen::Index>(n_classes);
  w1_ = store.create(prefix + ".w1", random_normal(d, cfg.hidden_width, 1.0 / std::sqrt(double(d)), rng));
  b1_ = store.create(prefix + ".b1", ad::Matrix::Zero(1, cfg.hidden_width));
  w2_ = store.create(prefix + ".w2",
                     random_normal(cfg.hidden_width, classes, 1.0 / std::sqrt(double(cfg.hidden_width)), rng));
  b2_ = store.create(prefix + ".b2", ad::Matrix::Zero(1, classes));
}

ad::Var ClassifierHead::logits(const ad::Var& embeddings) const {
  if (embeddings.cols() != d_) throw DimensionMismatch("classifier expects width " + std::to_string(d_));
  return ad::add_row(ad::matmul(ad::tanh(ad::add_row(ad::matmul(embeddings, w1_), b1_)), w2_), b2_);
}

ad::Vector softmax(const ad::Vector& logits) {
  const double best = logits.maxCoeff();
  ad::Vector e = (logits.array() - best).exp().matrix();
  return e / e.sum();
}

ad::Vector classify(const ad::Vector& embedding, const ClassifierHead& head) {
  if (embedding.size() != head.input_size()) {
    throw DimensionMismatch("embedding of size " + std::to_string(embedding.size()) + ", head expects " +
                            std::to_string(head.input_size()));
  }
  const ad::Var out = head.logits(ad::Var(embedding.transpose()));
  return softmax(out.value().row(0).transpose());
}

double supervised_loss(std::span<const ad::Vector> probabilities, std::span<const int> labels) {
  if (probabilities.empty()) throw EmptyBatch("supervised loss over zero examples");
  if (probabilities.size() != labels.size()) throw LengthMismatch("one label per prediction required");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= probabilities[i].size()) {
      throw LabelOutOfRange("label " + std::to_string(labels[i]));
    }
    total -= std::log(probabilities[i](labels[i]));
  }
  return total / static_cast<double>(labels.size());
}

ad::Var supervised_loss_from_logits(const ad::Var& logits, std::span<const int> labels) {
  if (labels.empty()) throw EmptyBatch("supervised loss over zero examples");
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw LengthMismatch("one label per logit row required");
  }
  for (int label : labels) {
    if (label < 0 || label >= logits.cols()) throw LabelOutOfRange("label " + std::to_string(label));
  }
  return ad::scale(ad::pick_sum(ad::log_softmax_rows(logits), labels), -1.0 / static_cast<double>(labels.size()));
}

}  // namespace scriptcl
