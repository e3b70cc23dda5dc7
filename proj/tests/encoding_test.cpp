#include <gtest/gtest.h>

#include <numeric>

#include "scriptcl/encoding.hpp"
#include "scriptcl/error.hpp"
#include "scriptcl/model.hpp"
#include "test_support.hpp"

namespace scriptcl {
namespace {

using testing::gradients_match;

Scene two_utterance_scene() {
  Scene s;
  s.scene_id = "s";
  s.utterances.push_back({Speaker::character(0), {"a", "b", "c", "d", "e"}, 0});
  s.utterances.push_back({Speaker::character(1), {"f", "g", "h", "i"}, 1});
  s.mentions.push_back({0, 1, 2, 1, 0});
  s.mentions.push_back({1, 0, 0, 1, 1});
  s.mentions.push_back({1, 3, 3, 0, 2});
  return s;
}

struct Fixture {
  ParameterStore store;
  std::mt19937_64 rng{5};
  std::unique_ptr<ToyEncoder> encoder;

  explicit Fixture(int d = 8, int max_length = 64) {
    EncoderConfig cfg;
    cfg.hidden_size = d;
    cfg.max_length = max_length;
    cfg.attention.ffn_width = 2 * d;
    encoder = std::make_unique<ToyEncoder>(store, Vocabulary({"a", "b", "c", "d", "e", "f", "g", "h", "i"}), cfg, rng);
  }
};

SequenceEncoding manual_encoding(const ad::Matrix& h, std::vector<int> lengths, std::vector<Speaker> speakers) {
  SequenceEncoding e;
  e.hidden = ad::Var(h);
  int offset = 0;
  for (int len : lengths) {
    e.utterance_offsets.push_back(offset);
    e.utterance_lengths.push_back(len);
    offset += len + 1;
  }
  e.speakers = std::move(speakers);
  return e;
}

TEST(EncodeConversation, CountsSeparators) {
  Fixture f;
  const SequenceEncoding e = encode_conversation(two_utterance_scene(), *f.encoder);
  EXPECT_EQ(e.rows(), 10);
  EXPECT_EQ(e.hidden.cols(), 8);
  EXPECT_EQ(e.row(0, 4), 4);
  EXPECT_EQ(e.row(1, 0), 6);
  EXPECT_EQ(e.row(1, 4), -1);
}

TEST(EncodeConversation, EmptySceneIsInvalid) {
  Fixture f;
  Scene empty;
  EXPECT_THROW(encode_conversation(empty, *f.encoder), InvalidInput);
}

TEST(EncodeConversation, RefusesToTruncate) {
  Fixture f(8, 9);
  try {
    encode_conversation(two_utterance_scene(), *f.encoder);
    FAIL() << "expected TooLong";
  } catch (const TooLong&) {
  }
}

TEST(EncodeConversation, PureForFixedParameters) {
  Fixture f;
  const Scene s = two_utterance_scene();
  EXPECT_EQ(encode_conversation(s, *f.encoder).hidden.value(), encode_conversation(s, *f.encoder).hidden.value());
}

TEST(MentionEmbeddings, SingleTokenWithZeroSpeakerIsTwiceTheRow) {
  Fixture f;
  SpeakerEmbeddingTable speakers(f.store, 6, 8, f.rng);
  f.store.get("speaker_embedding").mutable_value().setZero();
  const Scene s = two_utterance_scene();
  const SequenceEncoding e = encode_conversation(s, *f.encoder);
  const EmbeddingSet out = extract_mention_embeddings(e, s.mentions, speakers, 0);
  const ad::Matrix& h = e.hidden.value();
  EXPECT_TRUE(out.vectors.value().row(2).isApprox(2.0 * h.row(9)));
  EXPECT_TRUE(out.vectors.value().row(0).isApprox(h.row(1) + h.row(2)));
}

TEST(MentionEmbeddings, ComponentwiseSum) {
  ad::Matrix h(2, 2);
  h << 1, 0, 0, 1;
  ParameterStore store;
  std::mt19937_64 rng(1);
  SpeakerEmbeddingTable speakers(store, 3, 2, rng);
  store.get("speaker_embedding").mutable_value().setOnes();
  const SequenceEncoding e = manual_encoding(h, {2}, {Speaker::character(2)});
  const std::vector<MentionSpan> m = {{0, 0, 1, 0, 7}};
  const EmbeddingSet out = extract_mention_embeddings(e, m, speakers, 3);
  EXPECT_EQ(out.vectors.value(), (ad::Matrix(1, 2) << 2, 2).finished());
  EXPECT_EQ(out.tags[0].item_id, 7);
  EXPECT_EQ(out.tags[0].sample_index, 3);
}

TEST(MentionEmbeddings, SameCharacterTwice) {
  Fixture f;
  SpeakerEmbeddingTable speakers(f.store, 6, 8, f.rng);
  const Scene s = two_utterance_scene();
  const EmbeddingSet out = extract_mention_embeddings(encode_conversation(s, *f.encoder), s.mentions, speakers, 2);
  EXPECT_EQ(out.tags[0].character, out.tags[1].character);
  EXPECT_EQ(out.tags[0].sample_index, out.tags[1].sample_index);
  EXPECT_NE(out.vectors.value().row(0), out.vectors.value().row(1));
}

TEST(MentionEmbeddings, UnresolvableSpan) {
  Fixture f;
  SpeakerEmbeddingTable speakers(f.store, 6, 8, f.rng);
  Scene s = two_utterance_scene();
  s.mentions[0].end_token = 9;
  EXPECT_THROW(extract_mention_embeddings(encode_conversation(s, *f.encoder), s.mentions, speakers, 0),
               UnresolvableSpan);
}

TEST(MentionEmbeddings, LinearInHiddenAndSpeakers) {
  std::mt19937_64 rng(8);
  const ad::Matrix h1 = ad::Matrix::Random(6, 3), h2 = ad::Matrix::Random(6, 3);
  ParameterStore s1, s2, s3;
  SpeakerEmbeddingTable t1(s1, 2, 3, rng), t2(s2, 2, 3, rng), t3(s3, 2, 3, rng);
  s3.get("speaker_embedding").mutable_value() =
      2.0 * s1.get("speaker_embedding").value() - 0.5 * s2.get("speaker_embedding").value();
  const std::vector<Speaker> sp = {Speaker::character(0), Speaker::character(1)};
  const std::vector<MentionSpan> m = {{0, 0, 1, 0, 0}, {1, 1, 2, 1, 1}};
  auto e = [&](const ad::Matrix& h, const SpeakerEmbeddingTable& t) {
    return extract_mention_embeddings(manual_encoding(h, {2, 3}, sp), m, t, 0).vectors.value();
  };
  EXPECT_TRUE(e(2.0 * h1 - 0.5 * h2, t3).isApprox(2.0 * e(h1, t1) - 0.5 * e(h2, t2), 1e-12));
}

TEST(SlotPooling, SingletonMaskReturnsTheRow) {
  std::mt19937_64 rng(2);
  ParameterStore store;
  AttentionPooler pooler(store, "pooler", 4, rng);
  const ad::Matrix h = ad::Matrix::Random(5, 4);
  ad::Matrix mask = ad::Matrix::Zero(1, 5);
  mask(0, 3) = 1.0;
  const SequenceEncoding e = manual_encoding(h, {5}, {Speaker::slot(0)});
  EXPECT_TRUE(pool_speaker_embeddings(e, mask, pooler).value().row(0).isApprox(h.row(3), 1e-15));
}

TEST(SlotPooling, EqualScoresAverage) {
  std::mt19937_64 rng(2);
  ParameterStore store;
  AttentionPooler pooler(store, "pooler", 4, rng);
  store.get("pooler.w").mutable_value().setZero();
  const ad::Matrix h = ad::Matrix::Random(5, 4);
  ad::Matrix mask = ad::Matrix::Zero(1, 5);
  mask(0, 1) = mask(0, 4) = 1.0;
  const SequenceEncoding e = manual_encoding(h, {5}, {Speaker::slot(0)});
  EXPECT_TRUE(pool_speaker_embeddings(e, mask, pooler).value().row(0).isApprox(0.5 * (h.row(1) + h.row(4)), 1e-15));
}

TEST(SlotPooling, EmptyMask) {
  std::mt19937_64 rng(2);
  ParameterStore store;
  AttentionPooler pooler(store, "pooler", 4, rng);
  const SequenceEncoding e = manual_encoding(ad::Matrix::Random(5, 4), {5}, {Speaker::slot(0)});
  EXPECT_THROW(pool_speaker_embeddings(e, ad::Matrix::Zero(1, 5), pooler), EmptyMask);
}

TEST(SlotPooling, StaysInsideTheHullOfMaskedRows) {
  std::mt19937_64 rng(3);
  ParameterStore store;
  AttentionPooler pooler(store, "pooler", 6, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const ad::Matrix h = 3.0 * ad::Matrix::Random(7, 6);
    ad::Matrix mask = ad::Matrix::Zero(1, 7);
    mask(0, trial % 7) = 1.0;
    mask(0, (trial * 3 + 1) % 7) = 1.0;
    mask(0, (trial * 5 + 2) % 7) = 1.0;
    const SequenceEncoding e = manual_encoding(h, {7}, {Speaker::slot(0)});
    const ad::RowVector out = pool_speaker_embeddings(e, mask, pooler).value().row(0);
    for (Eigen::Index c = 0; c < 6; ++c) {
      double lo = 1e300, hi = -1e300;
      for (Eigen::Index r = 0; r < 7; ++r) {
        if (mask(0, r) == 0.0) continue;
        lo = std::min(lo, h(r, c));
        hi = std::max(hi, h(r, c));
      }
      EXPECT_GE(out(c), lo - 1e-12);
      EXPECT_LE(out(c), hi + 1e-12);
    }
  }
}

TEST(SlotMasks, CoverEachSlotsUtterances) {
  Fixture f;
  Scene s = two_utterance_scene();
  s.utterances[0].speaker = Speaker::slot(1);
  s.utterances[1].speaker = Speaker::slot(0);
  s.speaker_labels = {{0, 2}, {1, 3}};
  const SequenceEncoding e = encode_conversation(s, *f.encoder);
  const ad::Matrix m = slot_masks(s, e);
  ASSERT_EQ(m.rows(), 2);
  EXPECT_EQ(m.row(0).sum(), 5.0);  // slot 1 speaks first
  EXPECT_EQ(m(0, 5), 0.0);         // separator never selected
  EXPECT_EQ(m.row(1).sum(), 4.0);
  const EmbeddingSet slots = extract_slot_embeddings(s, e, AttentionPooler(f.store, "p", 8, f.rng), 4);
  EXPECT_EQ(slots.tags[0].item_id, 1);
  EXPECT_EQ(slots.tags[0].character, 3);
  EXPECT_EQ(slots.tags[1].character, 2);
}

TEST(SummaryEmbeddings, SingleTokenIsTwiceTheRow) {
  Fixture f;
  Summary sum;
  sum.summary_id = "x";
  sum.tokens = {"a", "b", "c"};
  sum.mentions = {{0, 2, 2, 1, 0}, {0, 0, 0, 1, 1}};
  const SequenceEncoding e = encode_summary_text(sum, *f.encoder);
  const EmbeddingSet out = encode_summary(sum, *f.encoder, 0);
  EXPECT_TRUE(out.vectors.value().row(0).isApprox(2.0 * e.hidden.value().row(2)));
  EXPECT_EQ(out.tags[0].source, Source::kSummary);
  EXPECT_EQ(out.tags[0].character, out.tags[1].character);
  sum.mentions.clear();
  EXPECT_TRUE(encode_summary(sum, *f.encoder, 0).empty());
}

TEST(SummaryEmbeddings, TooLong) {
  Fixture f(8, 2);
  Summary sum;
  sum.tokens = {"a", "b", "c"};
  sum.mentions = {{0, 0, 0, 1, 0}};
  EXPECT_THROW(encode_summary(sum, *f.encoder, 0), TooLong);
}

struct MlsaFixture {
  ParameterStore store;
  std::mt19937_64 rng{12};
  Mlsa mlsa;
  explicit MlsaFixture(int blocks, int d = 8) {
    MlsaConfig cfg;
    cfg.n_blocks = blocks;
    cfg.attention.ffn_width = 16;
    mlsa = Mlsa(store, "mlsa", d, cfg, rng);
  }
};

TEST(Mlsa, PermutationEquivariant) {
  MlsaFixture f(2);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 5;
    const ad::Matrix x = ad::Matrix::Random(n, 8);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const ad::Matrix y = f.mlsa.forward(ad::Var(x)).value();
    const ad::Matrix yp = f.mlsa.forward(ad::gather_rows(ad::Var(x), perm)).value();
    for (int i = 0; i < n; ++i) {
      EXPECT_LT((yp.row(i) - y.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Mlsa, StackIsCompositionOfBlocks) {
  MlsaFixture f(2);
  const ad::Var x(ad::Matrix::Random(3, 8));
  const ad::Matrix twice = f.mlsa.block(1).forward(f.mlsa.block(0).forward(x)).value();
  EXPECT_TRUE(f.mlsa.forward(x).value().isApprox(twice, 1e-14));
}

TEST(Mlsa, SingletonIsDeterministic) {
  MlsaFixture f(1);
  const ad::Var x(ad::Matrix::Random(1, 8));
  EXPECT_EQ(f.mlsa.forward(x).value(), f.mlsa.forward(x).value());
  EXPECT_THROW(f.mlsa.forward(ad::Var(ad::Matrix(0, 8))), EmptyInput);
}

TEST(Mlsa, RefinePreservesTags) {
  MlsaFixture f(2);
  EmbeddingSet in;
  in.vectors = ad::Var(ad::Matrix::Random(3, 8));
  in.tags = {{1, 0, Source::kSummary, 4}, {2, 0, Source::kSummary, 5}, {1, 0, Source::kSummary, 6}};
  const EmbeddingSet out = mlsa_refine(in, f.mlsa);
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out.tags[i].character, in.tags[i].character);
    EXPECT_EQ(out.tags[i].item_id, in.tags[i].item_id);
  }
}

Corpus gradient_corpus(CorpusFormat format) {
  SyntheticSpec spec;
  spec.n_scenes = 4;
  spec.utterances_per_scene = 4;
  spec.tokens_per_utterance = 3;
  spec.format = format;
  return generate_synthetic_corpus(spec, 21);
}

void check_model_gradients(Task task) {
  const Corpus corpus =
      gradient_corpus(task == Task::kLinking ? CorpusFormat::kLinkingCoref : CorpusFormat::kGuessing);
  ModelConfig cfg;
  cfg.task = task;
  cfg.encoder.hidden_size = 8;
  cfg.encoder.attention.ffn_width = 12;
  cfg.mlsa.attention.ffn_width = 12;
  cfg.head.hidden_width = 6;
  cfg.share_mlsa = false;
  CharacterModel model(cfg, corpus.registry, build_vocabulary(corpus), 3);
  const Scene& scene = corpus.scenes[0];
  const Summary& summary = *corpus.find_summary(*scene.summary_ref);
  std::mt19937_64 rng(6);
  const ad::Matrix w1 = ad::Matrix::Random(64, 8), w2 = ad::Matrix::Random(64, 8);
  auto f = [&] {
    const ad::Var conv = model.conversation_embeddings(scene, 0).vectors;
    const ad::Var sum = model.summary_embeddings(summary, 0).vectors;
    return ad::sum(ad::hadamard(ad::tanh(conv), ad::Var(w1.topRows(conv.rows())))) +
           ad::sum(ad::hadamard(ad::tanh(sum), ad::Var(w2.topRows(sum.rows()))));
  };
  std::vector<ad::Var> leaves;
  for (const auto& name : model.parameters().names()) {
    if (name.rfind("head.", 0) == 0) continue;
    leaves.push_back(model.parameters().get(name));
  }
  EXPECT_TRUE(gradients_match(f, leaves, 1e-3, 1e-8, 1e-5, 6));
}

TEST(EncodingGradients, LinkingPathMatchesFiniteDifferences) { check_model_gradients(Task::kLinking); }

TEST(EncodingGradients, GuessingPathMatchesFiniteDifferences) { check_model_gradients(Task::kGuessing); }

}  // namespace
}  // namespace scriptcl
