#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "scriptcl/error.hpp"
#include "scriptcl/objectives.hpp"
#include "test_support.hpp"

namespace scriptcl {
namespace {

using testing::gradients_match;
using testing::random_leaf;

ad::Vector vec(std::initializer_list<double> v) {
  ad::Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

PairSet pairs_of(const ad::Matrix& anchors, const ad::Matrix& positives) {
  PairSet p;
  p.anchors = ad::Var(anchors, true);
  p.positives = ad::Var(positives, true);
  for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
    p.anchor_tags.push_back({static_cast<CharacterId>(i), 0, Source::kConversation, 0});
    p.positive_tags.push_back({static_cast<CharacterId>(i), 1, Source::kSummary, 0});
  }
  return p;
}

// -sum_i log softmax_j(s_ij / tau)[i], written out with scalars.
double reference_info_nce(const ad::Matrix& a, const ad::Matrix& p, double tau) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double denom = 0.0, own = 0.0;
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
      const double s = a.row(i).dot(p.row(j)) / (a.row(i).norm() * p.row(j).norm());
      denom += std::exp(s / tau);
      if (i == j) own = std::exp(s / tau);
    }
    loss -= std::log(own / denom);
  }
  return loss;
}

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({3, -2, 5}), vec({3, -2, 5})), 1.0);
  EXPECT_NEAR(cosine_similarity(vec({1, 1}), vec({1, 0})), 0.70710678118654752, 1e-15);
  EXPECT_THROW(cosine_similarity(vec({0, 0}), vec({1, 0})), ZeroVector);
  EXPECT_THROW(cosine_similarity(vec({1, 0}), vec({1, 0, 0})), DimensionMismatch);
}

TEST(SummaryConversationLoss, SinglePairIsZero) {
  const ContrastiveConfig cfg;
  EXPECT_NEAR(summary_conversation_loss(pairs_of(ad::Matrix::Random(1, 4), ad::Matrix::Random(1, 4)), cfg).item(),
              0.0, 1e-15);
}

TEST(SummaryConversationLoss, EqualSimilaritiesGivePLogP) {
  const ad::Matrix a = (ad::Matrix(2, 2) << 1, 0, 1, 0).finished();
  const ad::Matrix p = (ad::Matrix(2, 2) << 1, 1, 1, 1).finished();
  EXPECT_NEAR(summary_conversation_loss(pairs_of(a, p), ContrastiveConfig{}).item(), 2.0 * std::log(2.0), 1e-9);
  EXPECT_NEAR(cross_sample_loss(pairs_of(a, p), ContrastiveConfig{}).item(), 2.0 * std::log(2.0), 1e-9);
  const ad::Matrix a5 = ad::Matrix::Ones(5, 3);
  EXPECT_NEAR(summary_conversation_loss(pairs_of(a5, 2.0 * a5), ContrastiveConfig{}).item(), 5.0 * std::log(5.0),
              1e-9);
}

TEST(SummaryConversationLoss, NearIdentityIsSmall) {
  const ad::Matrix eye = ad::Matrix::Identity(3, 3);
  const double loss = summary_conversation_loss(pairs_of(eye, eye), ContrastiveConfig{0.1}).item();
  EXPECT_LT(loss, 1e-3);
  EXPECT_NEAR(loss, 3.0 * std::log1p(2.0 * std::exp(-10.0)), 1e-15);
}

TEST(CrossSampleLoss, BlockDiagonalAtUnitTemperature) {
  const ad::Matrix eye = ad::Matrix::Identity(4, 4);
  const double expected = 4.0 * -std::log(std::exp(1.0) / (std::exp(1.0) + 3.0));
  EXPECT_NEAR(expected, 4.0 * std::log1p(3.0 / std::exp(1.0)), 1e-12);
  EXPECT_NEAR(expected, 2.97468, 1e-5);
  EXPECT_NEAR(cross_sample_loss(pairs_of(eye, eye), ContrastiveConfig{1.0}).item(), expected, 1e-12);
  EXPECT_NEAR(cross_sample_loss(pairs_of(eye.topRows(1), eye.topRows(1)), ContrastiveConfig{1.0}).item(), 0.0,
              1e-15);
}

TEST(ContrastiveLosses, EmptyPairSetAndBadTemperature) {
  EXPECT_THROW(summary_conversation_loss(PairSet{}, ContrastiveConfig{}), EmptyPairSet);
  EXPECT_THROW(cross_sample_loss(PairSet{}, ContrastiveConfig{}), EmptyPairSet);
  EXPECT_THROW(ContrastiveConfig{0.0}.validate(), InvalidConfig);
  EXPECT_THROW(ContrastiveConfig{-1.0}.validate(), InvalidConfig);
}

TEST(ContrastiveLosses, MatchScalarReference) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 5;
    const double tau = 0.05 + 0.2 * (trial % 4);
    const ad::Matrix a = random_leaf(k, 6, rng).value(), p = random_leaf(k, 6, rng).value();
    EXPECT_NEAR(info_nce(ad::Var(a), ad::Var(p), tau).item(), reference_info_nce(a, p, tau), 1e-10);
  }
}

TEST(ContrastiveLosses, NonNegativeScaleAndOrderInvariant) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 4;
    const ad::Matrix a = random_leaf(k, 5, rng).value(), p = random_leaf(k, 5, rng).value();
    const double base = info_nce(ad::Var(a), ad::Var(p), 0.1).item();
    EXPECT_GE(base, 0.0);
    ad::Matrix scaled = a;
    scaled.row(0) *= 7.5;
    ad::Matrix scaled_p = p;
    scaled_p.row(k - 1) *= 0.01;
    EXPECT_NEAR(info_nce(ad::Var(scaled), ad::Var(scaled_p), 0.1).item(), base, 1e-9);
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const ad::Var ap = ad::gather_rows(ad::Var(a), perm), pp = ad::gather_rows(ad::Var(p), perm);
    EXPECT_NEAR(info_nce(ap, pp, 0.1).item(), base, 1e-9);
  }
}

TEST(LossGradients, ContrastiveMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int k = 1; k <= 5; ++k) {
    ad::Var a = random_leaf(k, 8, rng), p = random_leaf(k, 8, rng);
    PairSet pairs = pairs_of(a.value(), p.value());
    pairs.anchors = a;
    pairs.positives = p;
    EXPECT_TRUE(gradients_match([&] { return summary_conversation_loss(pairs, ContrastiveConfig{0.1}); }, {a, p},
                                1e-4));
    EXPECT_TRUE(gradients_match([&] { return cross_sample_loss(pairs, ContrastiveConfig{0.5}); }, {a, p}, 1e-4));
  }
}

TEST(LossGradients, SupervisedMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  ad::Var logits = random_leaf(5, 6, rng);
  const std::vector<int> labels = {0, 3, 5, 3, 1};
  EXPECT_TRUE(gradients_match([&] { return supervised_loss_from_logits(logits, labels); }, {logits}, 1e-4));
}

TEST(SupervisedLoss, Examples) {
  const std::vector<ad::Vector> perfect = {vec({1, 0, 0}), vec({0, 0, 1})};
  EXPECT_DOUBLE_EQ(supervised_loss(perfect, std::vector<int>{0, 2}), 0.0);
  const std::vector<ad::Vector> uniform = {vec({0.25, 0.25, 0.25, 0.25})};
  EXPECT_NEAR(supervised_loss(uniform, std::vector<int>{2}), std::log(4.0), 1e-15);
  const std::vector<ad::Vector> mixed = {vec({0.5, 0.5}), vec({0.75, 0.25})};
  EXPECT_NEAR(supervised_loss(mixed, std::vector<int>{0, 1}), (std::log(2.0) + std::log(4.0)) / 2.0, 1e-15);
  EXPECT_NEAR((std::log(2.0) + std::log(4.0)) / 2.0, 1.03972, 1e-5);
  EXPECT_THROW(supervised_loss(std::vector<ad::Vector>{}, std::vector<int>{}), EmptyBatch);
  EXPECT_THROW(supervised_loss(uniform, std::vector<int>{4}), LabelOutOfRange);
}

TEST(SupervisedLoss, LogitFormAgreesWithProbabilityForm) {
  std::mt19937_64 rng(7);
  const ad::Matrix logits = random_leaf(4, 5, rng).value();
  const std::vector<int> labels = {1, 4, 0, 1};
  std::vector<ad::Vector> probs;
  for (Eigen::Index i = 0; i < 4; ++i) probs.push_back(softmax(logits.row(i).transpose()));
  EXPECT_NEAR(supervised_loss_from_logits(ad::Var(logits), labels).item(), supervised_loss(probs, labels), 1e-12);
}

TEST(Classify, SoftmaxProperties) {
  ParameterStore store;
  std::mt19937_64 rng(8);
  ClassifierHead head(store, "head", 4, 5, HeadConfig{3}, rng);
  const ad::Vector p = classify(vec({0.3, -1, 2, 0.5}), head);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  EXPECT_TRUE((p.array() > 0).all());
  store.get("head.w2").mutable_value().setZero();
  const ad::Vector flat = classify(vec({0.3, -1, 2, 0.5}), head);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(flat[i], 0.2, 1e-15);
  EXPECT_THROW(classify(vec({1, 2}), head), DimensionMismatch);

  const ad::Vector s = softmax(vec({10, 0, 0}));
  Eigen::Index best = -1;
  s.maxCoeff(&best);
  EXPECT_EQ(best, 0);
  EXPECT_TRUE(softmax(vec({10 + 3.5, 3.5, 3.5})).isApprox(s, 1e-14));
}

std::vector<EmbeddingTag> tags(std::initializer_list<std::pair<CharacterId, int>> items) {
  std::vector<EmbeddingTag> out;
  int id = 0;
  for (auto [c, si] : items) out.push_back({c, si, Source::kConversation, id++});
  return out;
}

TEST(SummaryPairs, SingletonChoiceIsForced) {
  AlignedSample sample;
  sample.shared_characters = {2};
  const auto conv = tags({{2, 0}, {1, 0}});
  std::vector<EmbeddingTag> sum = tags({{3, 0}, {2, 0}});
  for (auto& t : sum) t.source = Source::kSummary;
  std::mt19937_64 rng(1);
  const PairSelection s = select_summary_conversation_pairs(sample, conv, sum, rng);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.anchor_rows[0], 0);
  EXPECT_EQ(s.positive_rows[0], 1);
  sample.shared_characters.clear();
  EXPECT_TRUE(select_summary_conversation_pairs(sample, conv, sum, rng).empty());
}

TEST(SummaryPairs, UniformOverRepresentations) {
  AlignedSample sample;
  sample.shared_characters = {0};
  const auto conv = tags({{0, 0}, {1, 0}, {0, 0}, {0, 0}});
  const auto sum = tags({{0, 0}});
  std::map<int, int> counts;
  const int trials = 10000;
  for (int seed = 0; seed < trials; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    ++counts[select_summary_conversation_pairs(sample, conv, sum, rng).anchor_rows.at(0)];
  }
  ASSERT_EQ(counts.size(), 3u);
  for (auto [row, n] : counts) {
    EXPECT_NE(row, 1);
    EXPECT_NEAR(n / double(trials), 1.0 / 3.0, 0.02);
  }
  std::mt19937_64 a(42), b(42);
  EXPECT_EQ(select_summary_conversation_pairs(sample, conv, sum, a).anchor_rows,
            select_summary_conversation_pairs(sample, conv, sum, b).anchor_rows);
}

TEST(CrossPairs, Examples) {
  std::mt19937_64 rng(2);
  const auto both = tags({{0, 0}, {0, 1}});
  const PairSelection s = select_cross_pairs(both, rng);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_NE(both[static_cast<std::size_t>(s.anchor_rows[0])].sample_index,
            both[static_cast<std::size_t>(s.positive_rows[0])].sample_index);
  EXPECT_TRUE(select_cross_pairs(tags({{1, 0}, {1, 0}, {1, 0}}), rng).empty());
}

TEST(CrossPairs, ReservedAndUnlabelledNeverPair) {
  const CharacterRegistry r({"a", "b"});
  std::mt19937_64 rng(3);
  const auto t = tags({{r.other_id(), 0}, {r.other_id(), 1}, {-1, 0}, {-1, 1}, {0, 0}, {0, 1}});
  const PairSelection s = select_cross_pairs(t, rng, &r);
  EXPECT_EQ(s.characters, std::vector<CharacterId>{0});
}

TEST(CrossPairs, ConstraintHoldsOverManyDraws) {
  const auto t = tags({{0, 0}, {0, 0}, {0, 1}, {1, 0}, {1, 2}, {1, 2}, {2, 1}, {2, 1}});
  for (int seed = 0; seed < 10000; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const PairSelection s = select_cross_pairs(t, rng);
    ASSERT_EQ(s.characters, (std::vector<CharacterId>{0, 1}));
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto& a = t[static_cast<std::size_t>(s.anchor_rows[i])];
      const auto& p = t[static_cast<std::size_t>(s.positive_rows[i])];
      ASSERT_NE(a.sample_index, p.sample_index);
      ASSERT_EQ(a.character, s.characters[i]);
      ASSERT_EQ(p.character, s.characters[i]);
    }
  }
}

TEST(CrossPairs, EveryValidPairIsReachable) {
  const auto t = tags({{0, 0}, {0, 0}, {0, 1}});
  std::set<std::pair<int, int>> seen;
  for (int seed = 0; seed < 2000; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const PairSelection s = select_cross_pairs(t, rng);
    seen.insert({s.anchor_rows[0], s.positive_rows[0]});
  }
  const std::set<std::pair<int, int>> expected = {{0, 2}, {2, 0}, {1, 2}, {2, 1}};
  EXPECT_EQ(seen, expected);
}

TEST(CrossPairs, BatchWrapperTagsPairs) {
  std::vector<EmbeddingSet> batch(2);
  batch[0].vectors = ad::Var(ad::Matrix::Random(2, 3));
  batch[0].tags = tags({{0, 0}, {1, 0}});
  batch[1].vectors = ad::Var(ad::Matrix::Random(1, 3));
  batch[1].tags = tags({{0, 1}});
  std::mt19937_64 rng(4);
  const PairSet p = sample_cross_pairs(batch, rng);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p.anchor_tags[0].character, 0);
  EXPECT_NE(p.anchor_tags[0].sample_index, p.positive_tags[0].sample_index);
  EXPECT_EQ(p.anchors.rows(), 1);
}

}  // namespace
}  // namespace scriptcl
