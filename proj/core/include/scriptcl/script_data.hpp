#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scriptcl {

using CharacterId = int;

enum class Split { kTrain, kDev, kTest };
enum class CorpusFormat { kLinkingCoref, kGuessing };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);
std::string_view to_string(CorpusFormat format);
std::optional<CorpusFormat> parse_format(std::string_view text);

// Who is speaking an utterance: a registry character or an anonymous slot
// (P0, P1, ...) whose identity is the target of character guessing.
struct Speaker {
  bool anonymous = false;
  int id = 0;  // character id, or slot index when anonymous

  static Speaker character(CharacterId c) { return {false, c}; }
  static Speaker slot(int k) { return {true, k}; }
  friend bool operator==(const Speaker&, const Speaker&) = default;
};

struct Utterance {
  Speaker speaker;
  std::vector<std::string> tokens;
  int utterance_index = 0;
  friend bool operator==(const Utterance&, const Utterance&) = default;
};

// Token offsets are inclusive on both ends.
struct MentionSpan {
  int utterance_index = 0;
  int start_token = 0;
  int end_token = 0;
  CharacterId gold_character = 0;
  int mention_id = 0;
  friend bool operator==(const MentionSpan&, const MentionSpan&) = default;
};

struct Scene {
  std::string scene_id;
  Split split = Split::kTrain;
  std::vector<Utterance> utterances;
  std::vector<MentionSpan> mentions;
  std::map<int, CharacterId> speaker_labels;  // slot index -> gold character
  std::optional<std::string> summary_ref;

  // Slot indices in order of first appearance.
  std::vector<int> anonymous_slots() const;
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Summary {
  std::string summary_id;
  std::vector<std::string> tokens;
  std::vector<MentionSpan> mentions;  // utterance_index is always 0
  friend bool operator==(const Summary&, const Summary&) = default;
};

// The closed character set. The two reserved labels take part in linking
// but never form coreference clusters or contrastive pairs.
class CharacterRegistry {
 public:
  static constexpr std::string_view kOther = "#OTHER#";
  static constexpr std::string_view kGeneral = "#GENERAL#";

  CharacterRegistry() = default;
  // Appends the reserved entries when `names` lacks them. Throws InvalidSpec
  // on duplicate or empty names.
  explicit CharacterRegistry(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(CharacterId id) const;
  std::optional<CharacterId> find(std::string_view name) const;
  bool contains(CharacterId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < names_.size();
  }
  CharacterId other_id() const { return other_; }
  CharacterId general_id() const { return general_; }
  bool is_reserved(CharacterId id) const { return id == other_ || id == general_; }

  friend bool operator==(const CharacterRegistry& a, const CharacterRegistry& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, CharacterId, std::less<>> index_;
  CharacterId other_ = -1;
  CharacterId general_ = -1;
};

struct Corpus {
  CharacterRegistry registry;
  std::vector<Scene> scenes;        // sorted by scene_id
  std::vector<Summary> summaries;   // sorted by summary_id

  const Summary* find_summary(std::string_view summary_id) const;
  std::vector<const Scene*> scenes_in(Split split) const;
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct AlignedSample {
  const Scene* scene = nullptr;
  const Summary* summary = nullptr;  // null when the scene has no summary
  std::vector<CharacterId> shared_characters;  // ascending
};

// One validation finding; `kind` matches the exception type name.
struct Diagnostic {
  std::string kind;
  std::size_t line = 0;
  std::string message;
};

CharacterRegistry load_registry(const std::filesystem::path& path);
CharacterRegistry parse_registry(std::istream& in);

// Parses line-delimited scene/summary records. Throws the first error found.
Corpus parse_corpus(std::istream& in, CharacterRegistry registry, CorpusFormat format);
// Collects every problem instead of stopping at the first one.
std::vector<Diagnostic> validate_corpus(std::istream& in, const CharacterRegistry& registry,
                                        CorpusFormat format);

// `dir` holds registry.txt and corpus.jsonl.
Corpus load_corpus(const std::filesystem::path& dir, CorpusFormat format);
Corpus load_corpus(const std::filesystem::path& corpus_file,
                   const std::filesystem::path& registry_file, CorpusFormat format);

void write_corpus_records(std::ostream& out, const Corpus& corpus);
void write_registry(std::ostream& out, const CharacterRegistry& registry);
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

// Characters with a mention or a labelled slot in the scene.
std::vector<CharacterId> scene_characters(const Scene& scene);

AlignedSample align_characters(const Scene& scene, const Summary* summary,
                               const CharacterRegistry& registry);
// Aligns every scene of `split` with its summary, in scene order.
std::vector<AlignedSample> align_split(const Corpus& corpus, Split split);

struct SplitStats {
  std::size_t scenes = 0;
  std::size_t utterances = 0;
  std::size_t mentions = 0;
  std::size_t slots = 0;
  std::size_t summaries = 0;
};

struct CorpusStats {
  std::map<Split, SplitStats> splits;
  SplitStats total;
  // Mentions plus labelled slots per character, over all splits.
  std::vector<std::size_t> character_frequency;
};

CorpusStats corpus_stats(const Corpus& corpus);

struct SyntheticSpec {
  int n_characters = 4;
  int n_scenes = 200;
  int utterances_per_scene = 6;
  // Probability that an utterance token comes from the speaker's signature
  // vocabulary instead of the shared one.
  double vocab_skew = 0.35;
  CorpusFormat format = CorpusFormat::kGuessing;
  int tokens_per_utterance = 5;
  // Signature tokens following each character's name in the summary.
  int summary_signature_tokens = 2;
  int signature_vocab = 6;
  int shared_vocab = 40;
  int max_speakers_per_scene = 3;
  // Probability that an utterance addresses another on-stage character by name.
  double address_rate = 0.3;
  double dev_fraction = 0.15;
  double test_fraction = 0.15;
};

Corpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace scriptcl
