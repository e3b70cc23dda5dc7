#include "scriptcl/encoding.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "scriptcl/error.hpp"

namespace scriptcl {

ad::Var& ParameterStore::create(const std::string& name, ad::Matrix init) {
  auto [it, inserted] = index_.emplace(name, ad::Var(std::move(init), true));
  if (!inserted) throw InvalidConfig("duplicate parameter name '" + name + "'");
  names_.push_back(name);
  return it->second;
}

ad::Var& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidConfig("unknown parameter '" + name + "'");
  return it->second;
}

const ad::Var& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidConfig("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : index_) n += static_cast<std::size_t>(v.value().size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, v] : index_) v.zero_grad();
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.names_ != names_) throw InvalidConfig("parameter sets differ");
  for (const auto& name : names_) {
    const auto& src = other.get(name).value();
    auto& dst = get(name).mutable_value();
    if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
      throw DimensionMismatch("parameter '" + name + "' shape differs");
    }
    dst = src;
  }
}

ad::Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  ad::Matrix m(rows, cols);
  // Fill row-major so the draw order does not depend on Eigen's storage order.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

Vocabulary::Vocabulary() {
  add(kUnknown);
  add(kSeparator);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& t : tokens) add(t);
}

void Vocabulary::add(std::string_view token) {
  std::string key(token);
  if (index_.count(key)) return;
  index_.emplace(key, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(key));
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unknown_id() : it->second;
}

Vocabulary build_vocabulary(const Corpus& corpus) {
  std::set<std::string> seen;
  std::vector<std::string> ordered;
  auto take = [&](const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) {
      if (seen.insert(t).second) ordered.push_back(t);
    }
  };
  for (const Scene* scene : corpus.scenes_in(Split::kTrain)) {
    for (const auto& u : scene->utterances) take(u.tokens);
    if (scene->summary_ref) {
      if (const Summary* s = corpus.find_summary(*scene->summary_ref)) take(s->tokens);
    }
  }
  return Vocabulary(ordered);
}

int SequenceEncoding::row(int utterance, int offset) const {
  if (utterance < 0 || static_cast<std::size_t>(utterance) >= utterance_offsets.size()) return -1;
  if (offset < 0 || offset >= utterance_lengths[static_cast<std::size_t>(utterance)]) return -1;
  return utterance_offsets[static_cast<std::size_t>(utterance)] + offset;
}

TransformerBlock::TransformerBlock(ParameterStore& store, const std::string& prefix, int d,
                                   const AttentionConfig& cfg, std::mt19937_64& rng)
    : d_(d), heads_(cfg.n_heads) {
  if (heads_ < 1 || d % heads_ != 0) throw InvalidConfig("hidden size must be divisible by n_heads");
  if (cfg.ffn_width < 1) throw InvalidConfig("ffn_width must be >= 1");
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(cfg.ffn_width));
  auto zeros = [](Eigen::Index c) { return ad::Matrix::Zero(1, c); };
  auto ones = [](Eigen::Index c) { return ad::Matrix::Ones(1, c); };
  ln1_g_ = store.create(prefix + ".ln1.gamma", ones(d));
  ln1_b_ = store.create(prefix + ".ln1.beta", zeros(d));
  wq_ = store.create(prefix + ".attn.wq", random_normal(d, d, s, rng));
  bq_ = store.create(prefix + ".attn.bq", zeros(d));
  wk_ = store.create(prefix + ".attn.wk", random_normal(d, d, s, rng));
  bk_ = store.create(prefix + ".attn.bk", zeros(d));
  wv_ = store.create(prefix + ".attn.wv", random_normal(d, d, s, rng));
  bv_ = store.create(prefix + ".attn.bv", zeros(d));
  wo_ = store.create(prefix + ".attn.wo", random_normal(d, d, s, rng));
  bo_ = store.create(prefix + ".attn.bo", zeros(d));
  ln2_g_ = store.create(prefix + ".ln2.gamma", ones(d));
  ln2_b_ = store.create(prefix + ".ln2.beta", zeros(d));
  w1_ = store.create(prefix + ".ffn.w1", random_normal(d, cfg.ffn_width, s, rng));
  b1_ = store.create(prefix + ".ffn.b1", zeros(cfg.ffn_width));
  w2_ = store.create(prefix + ".ffn.w2", random_normal(cfg.ffn_width, d, s2, rng));
  b2_ = store.create(prefix + ".ffn.b2", zeros(d));
}

ad::Var TransformerBlock::forward(const ad::Var& x) const {
  using namespace ad;
  if (x.cols() != d_) throw DimensionMismatch("transformer block expects width " + std::to_string(d_));
  const Var n1 = layer_norm_rows(x, ln1_g_, ln1_b_);
  const Var q = add_row(matmul(n1, wq_), bq_);
  const Var k = add_row(matmul(n1, wk_), bk_);
  const Var v = add_row(matmul(n1, wv_), bv_);
  const int dh = d_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    const Var qh = slice_cols(q, h * dh, dh);
    const Var kh = slice_cols(k, h * dh, dh);
    const Var vh = slice_cols(v, h * dh, dh);
    const Var weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    heads.push_back(matmul(weights, vh));
  }
  const Var attended = heads.size() == 1 ? heads.front() : concat_cols(heads);
  const Var h1 = x + add_row(matmul(attended, wo_), bo_);
  const Var n2 = layer_norm_rows(h1, ln2_g_, ln2_b_);
  const Var ff = add_row(matmul(gelu(add_row(matmul(n2, w1_), b1_)), w2_), b2_);
  return h1 + ff;
}

ToyEncoder::ToyEncoder(ParameterStore& store, Vocabulary vocab, const EncoderConfig& cfg, std::mt19937_64& rng)
    : vocab_(std::move(vocab)), cfg_(cfg) {
  if (cfg.hidden_size < 1 || cfg.max_length < 1) throw InvalidConfig("encoder sizes must be positive");
  const auto d = cfg.hidden_size;
  token_embedding_ = store.create("encoder.token_embedding",
                                  random_normal(static_cast<Eigen::Index>(vocab_.size()), d, 1.0, rng));
  position_embedding_ = store.create("encoder.position_embedding", random_normal(cfg.max_length, d, 0.1, rng));
  block_ = TransformerBlock(store, "encoder.block0", d, cfg.attention, rng);
  final_g_ = store.create("encoder.final_ln.gamma", ad::Matrix::Ones(1, d));
  final_b_ = store.create("encoder.final_ln.beta", ad::Matrix::Zero(1, d));
}

std::vector<int> ToyEncoder::token_ids(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab_.id(t));
  return ids;
}

ad::Var ToyEncoder::encode(std::span<const int> ids) const {
  if (ids.empty()) throw InvalidInput("cannot encode an empty sequence");
  if (static_cast<int>(ids.size()) > cfg_.max_length) {
    throw TooLong("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_length " +
                  std::to_string(cfg_.max_length));
  }
  std::vector<int> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  const ad::Var x = ad::gather_rows(token_embedding_, ids) + ad::gather_rows(position_embedding_, positions);
  return ad::layer_norm_rows(block_.forward(x), final_g_, final_b_);
}

SequenceEncoding encode_conversation(const Scene& scene, const SequenceEncoder& encoder) {
  if (scene.utterances.empty()) throw InvalidInput("scene '" + scene.scene_id + "' has no utterances");
  SequenceEncoding out;
  std::vector<int> ids;
  for (const auto& u : scene.utterances) {
    if (u.tokens.empty()) throw InvalidInput("utterance without tokens in scene '" + scene.scene_id + "'");
    if (!ids.empty()) ids.push_back(encoder.separator_id());
    out.utterance_offsets.push_back(static_cast<int>(ids.size()));
    out.utterance_lengths.push_back(static_cast<int>(u.tokens.size()));
    out.speakers.push_back(u.speaker);
    auto part = encoder.token_ids(u.tokens);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  if (static_cast<int>(ids.size()) > encoder.max_length()) {
    throw TooLong("scene '" + scene.scene_id + "' has " + std::to_string(ids.size()) +
                  " tokens, max_length is " + std::to_string(encoder.max_length()));
  }
  out.hidden = encoder.encode(ids);
  return out;
}

SequenceEncoding encode_summary_text(const Summary& summary, const SequenceEncoder& encoder) {
  if (summary.tokens.empty()) throw InvalidInput("summary '" + summary.summary_id + "' has no tokens");
  if (static_cast<int>(summary.tokens.size()) > encoder.max_length()) {
    throw TooLong("summary '" + summary.summary_id + "' has " + std::to_string(summary.tokens.size()) +
                  " tokens, max_length is " + std::to_string(encoder.max_length()));
  }
  SequenceEncoding out;
  out.utterance_offsets = {0};
  out.utterance_lengths = {static_cast<int>(summary.tokens.size())};
  out.hidden = encoder.encode(encoder.token_ids(summary.tokens));
  return out;
}

SpeakerEmbeddingTable::SpeakerEmbeddingTable(ParameterStore& store, std::size_t n_characters, int d,
                                             std::mt19937_64& rng)
    : table_(store.create("speaker_embedding",
                          random_normal(static_cast<Eigen::Index>(n_characters), d, 0.1, rng))) {}

std::string_view to_string(Source source) {
  return source == Source::kSummary ? "summary" : "conversation";
}

std::vector<CharacterEmbedding> materialize(const EmbeddingSet& set) {
  std::vector<CharacterEmbedding> out;
  out.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    out.push_back({set.vectors.value().row(static_cast<Eigen::Index>(i)).transpose(), set.tags[i]});
  }
  return out;
}

namespace {

struct SpanRows {
  std::vector<int> starts, ends;
};

SpanRows resolve_spans(const SequenceEncoding& encoding, std::span<const MentionSpan> mentions) {
  SpanRows rows;
  for (const auto& m : mentions) {
    const int s = encoding.row(m.utterance_index, m.start_token);
    const int e = encoding.row(m.utterance_index, m.end_token);
    if (s < 0 || e < 0 || m.start_token > m.end_token) {
      throw UnresolvableSpan("mention " + std::to_string(m.mention_id));
    }
    rows.starts.push_back(s);
    rows.ends.push_back(e);
  }
  return rows;
}

}  // namespace

EmbeddingSet extract_mention_embeddings(const SequenceEncoding& encoding,
                                        std::span<const MentionSpan> mentions,
                                        const SpeakerEmbeddingTable& speakers, int sample_index) {
  EmbeddingSet out;
  if (mentions.empty()) return out;
  const SpanRows rows = resolve_spans(encoding, mentions);
  std::vector<int> speaker_rows;
  for (const auto& m : mentions) {
    const auto& speaker = encoding.speakers.at(static_cast<std::size_t>(m.utterance_index));
    if (speaker.anonymous || speaker.id < 0 || static_cast<std::size_t>(speaker.id) >= speakers.size()) {
      throw UnresolvableSpan("mention " + std::to_string(m.mention_id) + " has no known speaker");
    }
    speaker_rows.push_back(speaker.id);
    out.tags.push_back({m.gold_character, sample_index, Source::kConversation, m.mention_id});
  }
  out.vectors = ad::gather_rows(encoding.hidden, rows.starts) + ad::gather_rows(encoding.hidden, rows.ends) +
                ad::gather_rows(speakers.table(), speaker_rows);
  return out;
}

EmbeddingSet extract_summary_embeddings(const SequenceEncoding& encoding,
                                        std::span<const MentionSpan> mentions, int sample_index) {
  EmbeddingSet out;
  if (mentions.empty()) return out;
  const SpanRows rows = resolve_spans(encoding, mentions);
  for (const auto& m : mentions) out.tags.push_back({m.gold_character, sample_index, Source::kSummary, m.mention_id});
  out.vectors = ad::gather_rows(encoding.hidden, rows.starts) + ad::gather_rows(encoding.hidden, rows.ends);
  return out;
}

EmbeddingSet encode_summary(const Summary& summary, const SequenceEncoder& encoder, int sample_index) {
  if (summary.mentions.empty()) return {};
  return extract_summary_embeddings(encode_summary_text(summary, encoder), summary.mentions, sample_index);
}

AttentionPooler::AttentionPooler(ParameterStore& store, const std::string& prefix, int d, std::mt19937_64& rng)
    : w_(store.create(prefix + ".w", random_normal(d, 1, 1.0 / std::sqrt(static_cast<double>(d)), rng))),
      b_(store.create(prefix + ".b", ad::Matrix::Zero(1, 1))) {}

ad::Var AttentionPooler::pool(const ad::Var& hidden, const ad::Matrix& masks) const {
  using namespace ad;
  if (masks.cols() != hidden.rows()) throw DimensionMismatch("mask width must equal token count");
  for (Eigen::Index i = 0; i < masks.rows(); ++i) {
    if (!(masks.row(i).array() != 0.0).any()) throw EmptyMask("slot " + std::to_string(i) + " selects no token");
  }
  const Var scores = transpose(add_row(matmul(hidden, w_), b_));  // 1 x T
  const std::vector<int> repeat(static_cast<std::size_t>(masks.rows()), 0);
  const Var weights = masked_softmax_rows(gather_rows(scores, repeat), masks);
  return matmul(weights, hidden);
}

ad::Var pool_speaker_embeddings(const SequenceEncoding& encoding, const ad::Matrix& masks,
                                const AttentionPooler& pooler) {
  return pooler.pool(encoding.hidden, masks);
}

ad::Matrix slot_masks(const Scene& scene, const SequenceEncoding& encoding) {
  const auto slots = scene.anonymous_slots();
  ad::Matrix masks = ad::Matrix::Zero(static_cast<Eigen::Index>(slots.size()), encoding.rows());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    for (std::size_t u = 0; u < scene.utterances.size(); ++u) {
      const auto& sp = scene.utterances[u].speaker;
      if (!sp.anonymous || sp.id != slots[i]) continue;
      const int from = encoding.utterance_offsets[u];
      masks.row(static_cast<Eigen::Index>(i)).segment(from, encoding.utterance_lengths[u]).setOnes();
    }
  }
  return masks;
}

EmbeddingSet extract_slot_embeddings(const Scene& scene, const SequenceEncoding& encoding,
                                     const AttentionPooler& pooler, int sample_index) {
  EmbeddingSet out;
  const auto slots = scene.anonymous_slots();
  if (slots.empty()) return out;
  for (int slot : slots) {
    auto it = scene.speaker_labels.find(slot);
    out.tags.push_back({it == scene.speaker_labels.end() ? -1 : it->second, sample_index,
                        Source::kConversation, slot});
  }
  out.vectors = pool_speaker_embeddings(encoding, slot_masks(scene, encoding), pooler);
  return out;
}

Mlsa::Mlsa(ParameterStore& store, const std::string& prefix, int d, const MlsaConfig& cfg, std::mt19937_64& rng) {
  if (cfg.n_blocks < 1) throw InvalidConfig("MLSA needs at least one block");
  for (int b = 0; b < cfg.n_blocks; ++b) {
    blocks_.emplace_back(store, prefix + ".block" + std::to_string(b), d, cfg.attention, rng);
  }
}

ad::Var Mlsa::forward(const ad::Var& embeddings) const {
  if (embeddings.rows() == 0) throw EmptyInput("MLSA over zero embeddings");
  ad::Var x = embeddings;
  for (const auto& block : blocks_) x = block.forward(x);
  return x;
}

EmbeddingSet mlsa_refine(const EmbeddingSet& embeddings, const Mlsa& mlsa) {
  if (embeddings.empty()) throw EmptyInput("MLSA over zero embeddings");
  return {mlsa.forward(embeddings.vectors), embeddings.tags};
}

}  // namespace scriptcl
