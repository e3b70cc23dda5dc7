#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "scriptcl/error.hpp"
#include "scriptcl/script_data.hpp"
#include "test_support.hpp"

namespace scriptcl {
namespace {

using testing::friends_registry;
using testing::parse;

const char* kLinkingScene =
    R"({"scene_id":"s01","split":"train","utterances":[)"
    R"({"speaker":"ross","tokens":["hey","monica","how","are","you"]},)"
    R"({"speaker":"monica","tokens":["i","am","fine","ross"]}],)"
    R"("mentions":[{"utt":0,"start":1,"end":1,"gold":"monica"},)"
    R"({"utt":1,"start":0,"end":0,"gold":"monica"},{"utt":1,"start":3,"end":3,"gold":"ross"}],)"
    R"("summary_ref":"sum01"})"
    "\n"
    R"({"summary_id":"sum01","tokens":["ross","greets","joey"],)"
    R"("mentions":[{"start":0,"end":0,"gold":"ross"},{"start":2,"end":2,"gold":"joey"}]})"
    "\n";

TEST(Registry, AppendsReservedEntries) {
  const CharacterRegistry r = friends_registry();
  EXPECT_EQ(r.size(), 6u);
  EXPECT_EQ(r.name(r.other_id()), "#OTHER#");
  EXPECT_EQ(r.name(r.general_id()), "#GENERAL#");
  EXPECT_TRUE(r.is_reserved(r.other_id()));
  EXPECT_FALSE(r.is_reserved(0));
  EXPECT_EQ(r.find("joey"), 2);
  EXPECT_FALSE(r.find("gunther"));
}

TEST(Registry, RejectsDuplicates) {
  EXPECT_THROW(CharacterRegistry({"ross", "ross"}), InvalidSpec);
  EXPECT_THROW(CharacterRegistry({"ross", ""}), InvalidSpec);
}

TEST(Registry, ParsesOneNamePerLine) {
  std::istringstream in("ross\nmonica\n\n");
  const CharacterRegistry r = parse_registry(in);
  EXPECT_EQ(r.find("monica"), 1);
  EXPECT_EQ(r.size(), 4u);
}

TEST(LoadCorpus, StructuralEcho) {
  const Corpus c = parse(kLinkingScene, friends_registry(), CorpusFormat::kLinkingCoref);
  ASSERT_EQ(c.scenes.size(), 1u);
  EXPECT_EQ(c.scenes[0].mentions.size(), 3u);
  EXPECT_EQ(c.scenes[0].utterances.size(), 2u);
  EXPECT_EQ(c.scenes[0].utterances[1].utterance_index, 1);
  EXPECT_EQ(c.summaries.size(), 1u);
  EXPECT_EQ(c.summaries[0].mentions[1].gold_character, 2);
}

TEST(LoadCorpus, MentionEndAtUtteranceLengthIsMalformed) {
  const std::string bad =
      R"({"scene_id":"s","utterances":[{"speaker":"ross","tokens":["a","b"]}],)"
      R"("mentions":[{"utt":0,"start":0,"end":2,"gold":"ross"}]})";
  try {
    parse(bad, friends_registry(), CorpusFormat::kLinkingCoref);
    FAIL() << "expected MalformedRecord";
  } catch (const MalformedRecord& e) {
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(LoadCorpus, UnlabelledSlotInTrainIsMalformed) {
  const std::string bad =
      R"({"scene_id":"s","split":"train","utterances":[{"speaker":"P0","tokens":["a"]}],"speaker_labels":{}})";
  EXPECT_THROW(parse(bad, friends_registry(), CorpusFormat::kGuessing), MalformedRecord);
}

TEST(LoadCorpus, UnlabelledSlotInTestIsAccepted) {
  const std::string ok =
      R"({"scene_id":"s","split":"test","utterances":[{"speaker":"P0","tokens":["a"]}],"speaker_labels":{}})";
  const Corpus c = parse(ok, friends_registry(), CorpusFormat::kGuessing);
  EXPECT_EQ(c.scenes[0].anonymous_slots(), std::vector<int>{0});
  EXPECT_TRUE(c.scenes[0].speaker_labels.empty());
}

TEST(LoadCorpus, UnknownCharacter) {
  const std::string bad = R"({"scene_id":"s","utterances":[{"speaker":"gunther","tokens":["a"]}]})";
  EXPECT_THROW(parse(bad, friends_registry(), CorpusFormat::kLinkingCoref), UnknownCharacter);
}

TEST(LoadCorpus, DanglingSummaryRef) {
  const std::string bad =
      R"({"scene_id":"s","utterances":[{"speaker":"ross","tokens":["a"]}],"summary_ref":"nope"})";
  EXPECT_THROW(parse(bad, friends_registry(), CorpusFormat::kLinkingCoref), DanglingSummaryRef);
}

TEST(LoadCorpus, ReportsLineNumbers) {
  const std::string text = std::string(kLinkingScene) + "{not json}\n";
  try {
    parse(text, friends_registry(), CorpusFormat::kLinkingCoref);
    FAIL() << "expected MalformedRecord";
  } catch (const MalformedRecord& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadCorpus, OrdersScenesById) {
  const std::string text =
      R"({"scene_id":"b","utterances":[{"speaker":"ross","tokens":["x"]}]})"
      "\n"
      R"({"scene_id":"a","utterances":[{"speaker":"joey","tokens":["y"]}]})";
  const Corpus c = parse(text, friends_registry(), CorpusFormat::kLinkingCoref);
  EXPECT_EQ(c.scenes[0].scene_id, "a");
  EXPECT_EQ(c.scenes[1].scene_id, "b");
}

TEST(ValidateCorpus, CollectsEveryProblem) {
  const std::string text =
      R"({"scene_id":"a","utterances":[{"speaker":"gunther","tokens":["x"]}]})"
      "\n"
      "garbage\n"
      R"({"scene_id":"c","utterances":[{"speaker":"ross","tokens":["x"]}],"summary_ref":"missing"})";
  std::istringstream in(text);
  const auto d = validate_corpus(in, friends_registry(), CorpusFormat::kLinkingCoref);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].kind, "UnknownCharacter");
  EXPECT_EQ(d[1].kind, "MalformedRecord");
  EXPECT_EQ(d[1].line, 2u);
  EXPECT_EQ(d[2].kind, "DanglingSummaryRef");
}

TEST(AlignCharacters, SetIntersection) {
  const Corpus c = parse(kLinkingScene, friends_registry(), CorpusFormat::kLinkingCoref);
  const AlignedSample s = align_characters(c.scenes[0], &c.summaries[0], c.registry);
  EXPECT_EQ(s.shared_characters, std::vector<CharacterId>{0});
}

TEST(AlignCharacters, DisjointAndMissingSummary) {
  Corpus c = parse(kLinkingScene, friends_registry(), CorpusFormat::kLinkingCoref);
  Summary other = c.summaries[0];
  for (auto& m : other.mentions) m.gold_character = 3;
  EXPECT_TRUE(align_characters(c.scenes[0], &other, c.registry).shared_characters.empty());
  EXPECT_TRUE(align_characters(c.scenes[0], nullptr, c.registry).shared_characters.empty());
}

TEST(AlignCharacters, IdenticalSetsOfFour) {
  SyntheticSpec spec;
  spec.n_characters = 4;
  spec.n_scenes = 30;
  spec.max_speakers_per_scene = 4;
  spec.utterances_per_scene = 8;
  const Corpus c = generate_synthetic_corpus(spec, 3);
  bool saw_four = false;
  for (const auto& s : align_split(c, Split::kTrain)) {
    if (s.shared_characters.size() == 4) saw_four = true;
  }
  EXPECT_TRUE(saw_four);
}

TEST(AlignCharacters, IdempotentAndOrderFree) {
  const Corpus c = parse(kLinkingScene, friends_registry(), CorpusFormat::kLinkingCoref);
  Scene reversed = c.scenes[0];
  std::reverse(reversed.mentions.begin(), reversed.mentions.end());
  const auto a = align_characters(c.scenes[0], &c.summaries[0], c.registry);
  const auto b = align_characters(reversed, &c.summaries[0], c.registry);
  EXPECT_EQ(a.shared_characters, b.shared_characters);
  EXPECT_EQ(a.shared_characters, align_characters(c.scenes[0], &c.summaries[0], c.registry).shared_characters);
}

TEST(AlignCharacters, ReservedLabelsNeverShared) {
  const CharacterRegistry r = friends_registry();
  Scene scene;
  scene.scene_id = "s";
  scene.utterances.push_back({Speaker::character(0), {"someone", "x"}, 0});
  scene.mentions.push_back({0, 0, 0, r.other_id(), 0});
  Summary summary;
  summary.summary_id = "y";
  summary.tokens = {"someone"};
  summary.mentions.push_back({0, 0, 0, r.other_id(), 0});
  EXPECT_TRUE(align_characters(scene, &summary, r).shared_characters.empty());
}

TEST(Synthetic, DeterministicForSeed) {
  SyntheticSpec spec;
  spec.n_characters = 3;
  spec.n_scenes = 5;
  spec.utterances_per_scene = 6;
  const Corpus a = generate_synthetic_corpus(spec, 7);
  const Corpus b = generate_synthetic_corpus(spec, 7);
  EXPECT_EQ(a, b);
  std::ostringstream sa, sb;
  write_corpus_records(sa, a);
  write_corpus_records(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_NE(generate_synthetic_corpus(spec, 8), a);
}

TEST(Synthetic, LabelsStayInRange) {
  SyntheticSpec spec;
  spec.n_characters = 2;
  spec.n_scenes = 1;
  spec.utterances_per_scene = 4;
  for (auto format : {CorpusFormat::kGuessing, CorpusFormat::kLinkingCoref}) {
    spec.format = format;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Corpus c = generate_synthetic_corpus(spec, seed);
      for (const auto& scene : c.scenes) {
        for (const auto& m : scene.mentions) {
          const bool ok = m.gold_character < 2 || c.registry.is_reserved(m.gold_character);
          EXPECT_TRUE(ok);
        }
        for (const auto& [slot, ch] : scene.speaker_labels) EXPECT_LT(ch, 2);
      }
    }
  }
}

TEST(Synthetic, SharedCharactersAreTheSceneCast) {
  SyntheticSpec spec;
  spec.n_scenes = 20;
  const Corpus c = generate_synthetic_corpus(spec, 11);
  for (const auto& scene : c.scenes) {
    const AlignedSample s = align_characters(scene, c.find_summary(*scene.summary_ref), c.registry);
    std::set<CharacterId> speakers;
    for (const auto& [slot, ch] : scene.speaker_labels) speakers.insert(ch);
    EXPECT_EQ(std::vector<CharacterId>(speakers.begin(), speakers.end()), s.shared_characters);
  }
}

TEST(Synthetic, RejectsBadSpecs) {
  SyntheticSpec spec;
  spec.n_characters = 1;
  EXPECT_THROW(generate_synthetic_corpus(spec, 1), InvalidSpec);
  spec = {};
  spec.n_scenes = 0;
  EXPECT_THROW(generate_synthetic_corpus(spec, 1), InvalidSpec);
  spec = {};
  spec.vocab_skew = 1.5;
  EXPECT_THROW(generate_synthetic_corpus(spec, 1), InvalidSpec);
  spec = {};
  spec.summary_signature_tokens = -1;
  EXPECT_THROW(generate_synthetic_corpus(spec, 1), InvalidSpec);
}

TEST(Synthetic, SummaryLengthFollowsSignatureCount) {
  SyntheticSpec spec;
  spec.n_scenes = 5;
  for (int k : {0, 2, 7}) {
    spec.summary_signature_tokens = k;
    const Corpus c = generate_synthetic_corpus(spec, 3);
    for (const auto& summary : c.summaries) {
      // name, verb, k signature tokens, full stop
      EXPECT_EQ(summary.tokens.size(), summary.mentions.size() * static_cast<std::size_t>(k + 3));
    }
  }
}

TEST(Corpus, RoundTripThroughRecords) {
  for (auto format : {CorpusFormat::kGuessing, CorpusFormat::kLinkingCoref}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SyntheticSpec spec;
      spec.format = format;
      spec.n_scenes = 12;
      const Corpus c = generate_synthetic_corpus(spec, seed);
      std::ostringstream out;
      write_corpus_records(out, c);
      std::istringstream in(out.str());
      EXPECT_EQ(parse_corpus(in, c.registry, format), c);
    }
  }
}

TEST(Corpus, RoundTripThroughDirectory) {
  testing::TempDir dir("roundtrip");
  const Corpus c = generate_synthetic_corpus(SyntheticSpec{}, 4);
  write_corpus(dir.path(), c);
  EXPECT_EQ(load_corpus(dir.path(), CorpusFormat::kGuessing), c);
}

TEST(CorpusStats, CountsMatchContents) {
  const Corpus c = parse(kLinkingScene, friends_registry(), CorpusFormat::kLinkingCoref);
  const CorpusStats s = corpus_stats(c);
  EXPECT_EQ(s.total.scenes, 1u);
  EXPECT_EQ(s.total.mentions, 3u);
  EXPECT_EQ(s.splits.at(Split::kTrain).utterances, 2u);
  EXPECT_EQ(s.splits.at(Split::kDev).scenes, 0u);
  EXPECT_EQ(s.splits.at(Split::kTest).mentions, 0u);
  EXPECT_EQ(s.character_frequency[1], 2u);
}

}  // namespace
}  // namespace scriptcl
