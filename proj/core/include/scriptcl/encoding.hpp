#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scriptcl/autodiff.hpp"
#include "scriptcl/script_data.hpp"

namespace scriptcl {

// Named trainable tensors in insertion order. Names are the canonical keys
// used by checkpoints.
class ParameterStore {
 public:
  ad::Var& create(const std::string& name, ad::Matrix init);
  ad::Var& get(const std::string& name);
  const ad::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();
  // Copies values (not handles) from `other`; names and shapes must match.
  void copy_values_from(const ParameterStore& other);

 private:
  std::vector<std::string> names_;
  std::map<std::string, ad::Var> index_;
};

// Normal(0, stddev) initialiser drawing from a caller-owned generator.
ad::Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

class Vocabulary {
 public:
  static constexpr std::string_view kUnknown = "[UNK]";
  static constexpr std::string_view kSeparator = "[SEP]";

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;  // kUnknown's id when absent
  int separator_id() const { return 1; }
  int unknown_id() const { return 0; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void add(std::string_view token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Collects every token of the train split (utterances and summaries).
Vocabulary build_vocabulary(const Corpus& corpus);

struct SequenceEncoding {
  ad::Var hidden;                         // T_total x d
  std::vector<int> utterance_offsets;     // first row of each utterance
  std::vector<int> utterance_lengths;
  std::vector<Speaker> speakers;          // per utterance (conversation side)

  // Row of token `offset` in utterance `utterance`; -1 if out of bounds.
  int row(int utterance, int offset) const;
  Eigen::Index rows() const { return hidden.rows(); }
};

struct AttentionConfig {
  int n_heads = 2;
  int ffn_width = 64;
};

// Pre-norm transformer encoder block: x + MHA(LN(x)), then h + FFN(LN(h)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore& store, const std::string& prefix, int d, const AttentionConfig& cfg,
                   std::mt19937_64& rng);
  ad::Var forward(const ad::Var& x) const;

 private:
  int d_ = 0;
  int heads_ = 1;
  ad::Var ln1_g_, ln1_b_, wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
  ad::Var ln2_g_, ln2_b_, w1_, b1_, w2_, b2_;
};

struct EncoderConfig {
  int hidden_size = 32;
  int max_length = 512;
  AttentionConfig attention;
};

// What the rest of the pipeline needs from a sequence encoder: a fixed
// hidden size, a hard length limit, and one output row per input token.
class SequenceEncoder {
 public:
  virtual ~SequenceEncoder() = default;
  virtual int hidden_size() const = 0;
  virtual int max_length() const = 0;
  virtual int separator_id() const = 0;
  virtual std::vector<int> token_ids(std::span<const std::string> tokens) const = 0;
  // Throws TooLong when ids.size() > max_length(), InvalidInput when empty.
  virtual ad::Var encode(std::span<const int> ids) const = 0;
};

// Token + position embeddings followed by one transformer block and a final
// layer norm.
class ToyEncoder : public SequenceEncoder {
 public:
  ToyEncoder(ParameterStore& store, Vocabulary vocab, const EncoderConfig& cfg, std::mt19937_64& rng);

  int hidden_size() const override { return cfg_.hidden_size; }
  int max_length() const override { return cfg_.max_length; }
  int separator_id() const override { return vocab_.separator_id(); }
  std::vector<int> token_ids(std::span<const std::string> tokens) const override;
  ad::Var encode(std::span<const int> ids) const override;

  const Vocabulary& vocabulary() const { return vocab_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  Vocabulary vocab_;
  EncoderConfig cfg_;
  ad::Var token_embedding_, position_embedding_, final_g_, final_b_;
  TransformerBlock block_;
};

// Utterances joined with one separator between consecutive utterances.
SequenceEncoding encode_conversation(const Scene& scene, const SequenceEncoder& encoder);
SequenceEncoding encode_summary_text(const Summary& summary, const SequenceEncoder& encoder);

class SpeakerEmbeddingTable {
 public:
  SpeakerEmbeddingTable() = default;
  SpeakerEmbeddingTable(ParameterStore& store, std::size_t n_characters, int d, std::mt19937_64& rng);
  const ad::Var& table() const { return table_; }
  std::size_t size() const { return static_cast<std::size_t>(table_.rows()); }

 private:
  ad::Var table_;
};

enum class Source { kConversation, kSummary };
std::string_view to_string(Source source);

struct EmbeddingTag {
  CharacterId character = -1;  // -1 when unknown (unlabelled slot)
  int sample_index = 0;
  Source source = Source::kConversation;
  int item_id = 0;  // mention id or slot index
};

// A block of character embeddings: row i of `vectors` carries tags[i].
struct EmbeddingSet {
  ad::Var vectors;
  std::vector<EmbeddingTag> tags;
  std::size_t size() const { return tags.size(); }
  bool empty() const { return tags.empty(); }
};

// A detached copy of one embedding row.
struct CharacterEmbedding {
  ad::Vector vector;
  EmbeddingTag tag;
};
std::vector<CharacterEmbedding> materialize(const EmbeddingSet& set);

// e = H[start] + H[end] + speaker(utterance of the mention).
EmbeddingSet extract_mention_embeddings(const SequenceEncoding& encoding,
                                        std::span<const MentionSpan> mentions,
                                        const SpeakerEmbeddingTable& speakers, int sample_index);

// e = H[start] + H[end], no speaker term.
EmbeddingSet extract_summary_embeddings(const SequenceEncoding& encoding,
                                        std::span<const MentionSpan> mentions, int sample_index);

// One-layer token scorer shared by all slots.
class AttentionPooler {
 public:
  AttentionPooler() = default;
  AttentionPooler(ParameterStore& store, const std::string& prefix, int d, std::mt19937_64& rng);
  // masks: n x T_total of 0/1. Returns n x d.
  ad::Var pool(const ad::Var& hidden, const ad::Matrix& masks) const;

 private:
  ad::Var w_, b_;
};

ad::Var pool_speaker_embeddings(const SequenceEncoding& encoding, const ad::Matrix& masks,
                                const AttentionPooler& pooler);

// Token masks of the scene's anonymous slots (order of Scene::anonymous_slots).
ad::Matrix slot_masks(const Scene& scene, const SequenceEncoding& encoding);

// Pooled embeddings of every anonymous slot, tagged with gold labels if known.
EmbeddingSet extract_slot_embeddings(const Scene& scene, const SequenceEncoding& encoding,
                                     const AttentionPooler& pooler, int sample_index);

EmbeddingSet encode_summary(const Summary& summary, const SequenceEncoder& encoder, int sample_index);

struct MlsaConfig {
  int n_blocks = 2;
  AttentionConfig attention;
};

// Mention-level self-attention: a stack of transformer blocks over the
// embeddings of one sample, without positional information.
class Mlsa {
 public:
  Mlsa() = default;
  Mlsa(ParameterStore& store, const std::string& prefix, int d, const MlsaConfig& cfg, std::mt19937_64& rng);
  ad::Var forward(const ad::Var& embeddings) const;
  std::size_t n_blocks() const { return blocks_.size(); }
  const TransformerBlock& block(std::size_t i) const { return blocks_[i]; }

 private:
  std::vector<TransformerBlock> blocks_;
};

EmbeddingSet mlsa_refine(const EmbeddingSet& embeddings, const Mlsa& mlsa);

}  // namespace scriptcl
