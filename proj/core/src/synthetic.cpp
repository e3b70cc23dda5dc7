#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

#include "scriptcl/error.hpp"
#include "scriptcl/script_data.hpp"

namespace scriptcl {

namespace {

constexpr const char* kNamePool[] = {"ross",  "monica", "joey",  "rachel", "chandler", "phoebe",
                                     "frasier", "niles", "roz",   "martin", "daphne",   "bob"};

std::string character_name(int c) {
  constexpr int kPool = static_cast<int>(std::size(kNamePool));
  if (c < kPool) return kNamePool[c];
  return "char" + std::to_string(c);
}

std::string padded(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
  return buf;
}

void check(const SyntheticSpec& spec) {
  auto fail = [](const std::string& what) { throw InvalidSpec(what); };
  if (spec.n_characters < 2) fail("n_characters must be >= 2");
  if (spec.n_scenes < 1) fail("n_scenes must be >= 1");
  if (spec.utterances_per_scene < 1) fail("utterances_per_scene must be >= 1");
  if (spec.tokens_per_utterance < 1) fail("tokens_per_utterance must be >= 1");
  if (spec.summary_signature_tokens < 0) fail("summary_signature_tokens must be >= 0");
  if (spec.signature_vocab < 1 || spec.shared_vocab < 1) fail("vocabulary sizes must be >= 1");
  if (spec.max_speakers_per_scene < 1) fail("max_speakers_per_scene must be >= 1");
  if (!(spec.vocab_skew >= 0.0 && spec.vocab_skew <= 1.0)) fail("vocab_skew must lie in [0, 1]");
  if (!(spec.address_rate >= 0.0 && spec.address_rate <= 1.0)) fail("address_rate must lie in [0, 1]");
  if (spec.dev_fraction < 0.0 || spec.test_fraction < 0.0 ||
      spec.dev_fraction + spec.test_fraction > 1.0) {
    fail("split fractions must be non-negative and sum to at most 1");
  }
}

class SceneWriter {
 public:
  SceneWriter(const SyntheticSpec& spec, std::mt19937_64& rng)
      : spec_(spec), rng_(rng) {
    std::vector<double> weights(static_cast<std::size_t>(spec.signature_vocab));
    for (std::size_t k = 0; k < weights.size(); ++k) weights[k] = 1.0 / static_cast<double>(k + 1);
    signature_rank_ = std::discrete_distribution<int>(weights.begin(), weights.end());
  }

  std::string signature_token(int c) {
    return "s" + std::to_string(c) + "_" + std::to_string(signature_rank_(rng_));
  }

  std::string shared_token() {
    return "w" + std::to_string(uniform(0, spec_.shared_vocab - 1));
  }

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

  // Picks the on-stage cast and the speaker of every utterance; every cast
  // member speaks at least once.
  std::pair<std::vector<int>, std::vector<int>> cast_and_turns() {
    const int most = std::min({spec_.max_speakers_per_scene, spec_.n_characters,
                               spec_.utterances_per_scene});
    const int k = most <= 2 ? most : uniform(2, most);
    std::vector<int> all(static_cast<std::size_t>(spec_.n_characters));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng_);
    std::vector<int> cast(all.begin(), all.begin() + k);
    std::vector<int> turns(cast);
    while (static_cast<int>(turns.size()) < spec_.utterances_per_scene) {
      turns.push_back(cast[static_cast<std::size_t>(uniform(0, k - 1))]);
    }
    std::shuffle(turns.begin(), turns.end(), rng_);
    return {cast, turns};
  }

 private:
  const SyntheticSpec& spec_;
  std::mt19937_64& rng_;
  std::discrete_distribution<int> signature_rank_;
};

}  // namespace

Corpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  check(spec);
  std::mt19937_64 rng(seed);
  SceneWriter writer(spec, rng);

  std::vector<std::string> names;
  for (int c = 0; c < spec.n_characters; ++c) names.push_back(character_name(c));
  Corpus corpus;
  corpus.registry = CharacterRegistry(names);
  const CharacterId other = corpus.registry.other_id();
  const bool guessing = spec.format == CorpusFormat::kGuessing;

  const int n_test = static_cast<int>(spec.n_scenes * spec.test_fraction + 0.5);
  const int n_dev = static_cast<int>(spec.n_scenes * spec.dev_fraction + 0.5);
  const int n_train = spec.n_scenes - n_dev - n_test;
  static const std::vector<std::string> kVerbs = {"says", "tells", "asks", "talks", "argues"};

  for (int i = 0; i < spec.n_scenes; ++i) {
    Scene scene;
    scene.scene_id = padded("scene_", i);
    scene.split = i < n_train ? Split::kTrain : (i < n_train + n_dev ? Split::kDev : Split::kTest);
    auto [cast, turns] = writer.cast_and_turns();

    std::vector<int> slot_of(static_cast<std::size_t>(spec.n_characters), -1);
    int next_slot = 0;
    for (std::size_t t = 0; t < turns.size(); ++t) {
      const int speaker = turns[t];
      Utterance u;
      u.utterance_index = static_cast<int>(t);
      if (guessing) {
        if (slot_of[speaker] < 0) {
          slot_of[speaker] = next_slot++;
          scene.speaker_labels[slot_of[speaker]] = speaker;
        }
        u.speaker = Speaker::slot(slot_of[speaker]);
      } else {
        u.speaker = Speaker::character(speaker);
      }

      auto add_mention = [&](int start, int end, CharacterId gold) {
        MentionSpan m;
        m.utterance_index = u.utterance_index;
        m.start_token = start;
        m.end_token = end;
        m.gold_character = gold;
        m.mention_id = static_cast<int>(scene.mentions.size());
        scene.mentions.push_back(m);
      };

      if (cast.size() > 1 && writer.coin(spec.address_rate)) {
        int addressee = speaker;
        while (addressee == speaker) addressee = cast[static_cast<std::size_t>(writer.uniform(0, static_cast<int>(cast.size()) - 1))];
        u.tokens.push_back("hey");
        u.tokens.push_back(names[addressee]);
        add_mention(1, 1, addressee);
      }
      if (!guessing && writer.coin(0.5)) {
        u.tokens.push_back("i");
        add_mention(static_cast<int>(u.tokens.size()) - 1, static_cast<int>(u.tokens.size()) - 1, speaker);
      }
      for (int k = 0; k < spec.tokens_per_utterance; ++k) {
        u.tokens.push_back(writer.coin(spec.vocab_skew) ? writer.signature_token(speaker)
                                                        : writer.shared_token());
      }
      if (!guessing && writer.coin(0.1)) {
        u.tokens.push_back("someone");
        add_mention(static_cast<int>(u.tokens.size()) - 1, static_cast<int>(u.tokens.size()) - 1, other);
      }
      scene.utterances.push_back(std::move(u));
    }

    Summary summary;
    summary.summary_id = padded("summary_", i);
    std::vector<int> order(cast);
    std::sort(order.begin(), order.end());
    for (int c : order) {
      MentionSpan m;
      m.start_token = m.end_token = static_cast<int>(summary.tokens.size());
      m.gold_character = c;
      m.mention_id = static_cast<int>(summary.mentions.size());
      summary.mentions.push_back(m);
      summary.tokens.push_back(names[c]);
      summary.tokens.push_back(kVerbs[static_cast<std::size_t>(writer.uniform(0, static_cast<int>(kVerbs.size()) - 1))]);
      for (int k = 0; k < spec.summary_signature_tokens; ++k) summary.tokens.push_back(writer.signature_token(c));
      summary.tokens.push_back(".");
    }
    scene.summary_ref = summary.summary_id;
    corpus.scenes.push_back(std::move(scene));
    corpus.summaries.push_back(std::move(summary));
  }
  return corpus;
}

}  // namespace scriptcl
