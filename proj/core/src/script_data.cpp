#include "scriptcl/script_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "scriptcl/error.hpp"

namespace scriptcl {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "dev") return Split::kDev;
  if (text == "test") return Split::kTest;
  return std::nullopt;
}

std::string_view to_string(CorpusFormat format) {
  return format == CorpusFormat::kGuessing ? "guessing" : "linking_coref";
}

std::optional<CorpusFormat> parse_format(std::string_view text) {
  if (text == "guessing") return CorpusFormat::kGuessing;
  if (text == "linking_coref" || text == "linking" || text == "coref") {
    return CorpusFormat::kLinkingCoref;
  }
  return std::nullopt;
}

std::vector<int> Scene::anonymous_slots() const {
  std::vector<int> slots;
  for (const auto& u : utterances) {
    if (u.speaker.anonymous &&
        std::find(slots.begin(), slots.end(), u.speaker.id) == slots.end()) {
      slots.push_back(u.speaker.id);
    }
  }
  return slots;
}

CharacterRegistry::CharacterRegistry(std::vector<std::string> names) : names_(std::move(names)) {
  for (auto reserved : {kOther, kGeneral}) {
    if (std::find(names_.begin(), names_.end(), reserved) == names_.end()) {
      names_.emplace_back(reserved);
    }
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw InvalidSpec("empty character name at id " + std::to_string(i));
    if (!index_.emplace(names_[i], static_cast<CharacterId>(i)).second) {
      throw InvalidSpec("duplicate character name '" + names_[i] + "'");
    }
  }
  other_ = index_.find(kOther)->second;
  general_ = index_.find(kGeneral)->second;
}

const std::string& CharacterRegistry::name(CharacterId id) const {
  if (!contains(id)) throw UnknownCharacter("character id " + std::to_string(id));
  return names_[static_cast<std::size_t>(id)];
}

std::optional<CharacterId> CharacterRegistry::find(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Summary* Corpus::find_summary(std::string_view summary_id) const {
  auto it = std::lower_bound(summaries.begin(), summaries.end(), summary_id,
                             [](const Summary& s, std::string_view id) { return s.summary_id < id; });
  if (it == summaries.end() || it->summary_id != summary_id) return nullptr;
  return &*it;
}

std::vector<const Scene*> Corpus::scenes_in(Split split) const {
  std::vector<const Scene*> out;
  for (const auto& s : scenes) {
    if (s.split == split) out.push_back(&s);
  }
  return out;
}

CharacterRegistry parse_registry(std::istream& in) {
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.pop_back();
    }
    if (line.empty()) continue;
    names.push_back(line);
  }
  return CharacterRegistry(std::move(names));
}

CharacterRegistry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open registry file " + path.string());
  return parse_registry(in);
}

namespace {

std::optional<int> parse_slot_name(std::string_view text) {
  if (text.size() < 2 || text[0] != 'P') return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data() + 1, text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value < 0) return std::nullopt;
  return value;
}

std::string slot_name(int slot) { return "P" + std::to_string(slot); }

// Line-by-line record parser. In strict mode the first problem throws; in
// collecting mode problems are appended to `diagnostics` and the offending
// record is skipped.
class RecordParser {
 public:
  RecordParser(const CharacterRegistry& registry, CorpusFormat format, bool strict)
      : registry_(registry), format_(format), strict_(strict) {}

  Corpus parse(std::istream& in) {
    Corpus corpus;
    corpus.registry = registry_;
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> scene_ids;
    std::set<std::string> summary_ids;
    std::vector<std::pair<std::size_t, std::size_t>> scene_lines;  // (scene idx, line)
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        json record;
        try {
          record = json::parse(line);
        } catch (const json::parse_error& e) {
          throw MalformedRecord(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!record.is_object()) throw MalformedRecord(line_no, "record is not an object");
        if (record.contains("scene_id")) {
          Scene scene = parse_scene(record, line_no);
          if (!scene_ids.insert(scene.scene_id).second) {
            throw MalformedRecord(line_no, "duplicate scene_id '" + scene.scene_id + "'");
          }
          scene_lines.emplace_back(corpus.scenes.size(), line_no);
          corpus.scenes.push_back(std::move(scene));
        } else if (record.contains("summary_id")) {
          Summary summary = parse_summary(record, line_no);
          if (!summary_ids.insert(summary.summary_id).second) {
            throw MalformedRecord(line_no, "duplicate summary_id '" + summary.summary_id + "'");
          }
          corpus.summaries.push_back(std::move(summary));
        } else {
          throw MalformedRecord(line_no, "record has neither scene_id nor summary_id");
        }
      } catch (const Error& e) {
        if (strict_) throw;
        add_diagnostic(e, line_no);
      }
    }
    for (auto [idx, at] : scene_lines) {
      const auto& scene = corpus.scenes[idx];
      if (scene.summary_ref && !summary_ids.count(*scene.summary_ref)) {
        DanglingSummaryRef error("scene '" + scene.scene_id + "' references missing summary '" +
                                 *scene.summary_ref + "'");
        if (strict_) throw error;
        add_diagnostic(error, at);
      }
    }
    std::sort(corpus.scenes.begin(), corpus.scenes.end(),
              [](const Scene& a, const Scene& b) { return a.scene_id < b.scene_id; });
    std::sort(corpus.summaries.begin(), corpus.summaries.end(),
              [](const Summary& a, const Summary& b) { return a.summary_id < b.summary_id; });
    return corpus;
  }

  std::vector<Diagnostic> diagnostics;

 private:
  void add_diagnostic(const Error& e, std::size_t line) {
    std::string message = e.what();
    if (auto* m = dynamic_cast<const MalformedRecord*>(&e)) message = m->reason();
    diagnostics.push_back({e.kind(), line, message});
  }

  CharacterId resolve(const std::string& name) const {
    auto id = registry_.find(name);
    if (!id) throw UnknownCharacter("'" + name + "' is not in the registry");
    return *id;
  }

  static std::vector<std::string> parse_tokens(const json& j, std::size_t line, const char* what) {
    if (!j.is_array()) throw MalformedRecord(line, std::string(what) + " tokens must be an array");
    std::vector<std::string> tokens;
    tokens.reserve(j.size());
    for (const auto& t : j) {
      if (!t.is_string()) throw MalformedRecord(line, std::string(what) + " token is not a string");
      tokens.push_back(t.get<std::string>());
    }
    return tokens;
  }

  static int get_int(const json& j, const char* key, std::size_t line) {
    if (!j.contains(key) || !j[key].is_number_integer()) {
      throw MalformedRecord(line, std::string("field '") + key + "' must be an integer");
    }
    return j[key].get<int>();
  }

  MentionSpan parse_mention(const json& j, std::size_t line, int default_id, bool summary_side) {
    if (!j.is_object()) throw MalformedRecord(line, "mention is not an object");
    MentionSpan m;
    m.utterance_index = summary_side ? 0 : get_int(j, "utt", line);
    m.start_token = get_int(j, "start", line);
    m.end_token = get_int(j, "end", line);
    m.mention_id = j.contains("id") ? get_int(j, "id", line) : default_id;
    if (!j.contains("gold") || !j["gold"].is_string()) {
      throw MalformedRecord(line, "mention field 'gold' must be a character name");
    }
    m.gold_character = resolve(j["gold"].get<std::string>());
    return m;
  }

  static void check_span(const MentionSpan& m, std::size_t length, std::size_t line) {
    if (m.start_token < 0 || m.start_token > m.end_token ||
        static_cast<std::size_t>(m.end_token) >= length) {
      throw MalformedRecord(line, "mention " + std::to_string(m.mention_id) + " span [" +
                                      std::to_string(m.start_token) + "," +
                                      std::to_string(m.end_token) +
                                      "] out of bounds for length " + std::to_string(length));
    }
  }

  static void check_unique_ids(const std::vector<MentionSpan>& mentions, std::size_t line) {
    std::set<int> ids;
    for (const auto& m : mentions) {
      if (!ids.insert(m.mention_id).second) {
        throw MalformedRecord(line, "duplicate mention id " + std::to_string(m.mention_id));
      }
    }
  }

  Scene parse_scene(const json& j, std::size_t line) {
    Scene scene;
    if (!j["scene_id"].is_string()) throw MalformedRecord(line, "scene_id must be a string");
    scene.scene_id = j["scene_id"].get<std::string>();
    if (j.contains("split")) {
      auto split = j["split"].is_string() ? parse_split(j["split"].get<std::string>()) : std::nullopt;
      if (!split) throw MalformedRecord(line, "split must be one of train/dev/test");
      scene.split = *split;
    }
    if (!j.contains("utterances") || !j["utterances"].is_array() || j["utterances"].empty()) {
      throw MalformedRecord(line, "scene needs a non-empty utterances array");
    }
    for (const auto& ju : j["utterances"]) {
      if (!ju.is_object() || !ju.contains("speaker") || !ju["speaker"].is_string()) {
        throw MalformedRecord(line, "utterance needs a string speaker");
      }
      Utterance u;
      u.utterance_index = static_cast<int>(scene.utterances.size());
      const auto speaker = ju["speaker"].get<std::string>();
      auto slot = format_ == CorpusFormat::kGuessing ? parse_slot_name(speaker) : std::nullopt;
      u.speaker = slot ? Speaker::slot(*slot) : Speaker::character(resolve(speaker));
      u.tokens = parse_tokens(ju.value("tokens", json()), line, "utterance");
      if (u.tokens.empty()) throw MalformedRecord(line, "utterance has no tokens");
      scene.utterances.push_back(std::move(u));
    }
    if (j.contains("mentions")) {
      if (!j["mentions"].is_array()) throw MalformedRecord(line, "mentions must be an array");
      int next = 0;
      for (const auto& jm : j["mentions"]) {
        MentionSpan m = parse_mention(jm, line, next++, false);
        if (m.utterance_index < 0 ||
            static_cast<std::size_t>(m.utterance_index) >= scene.utterances.size()) {
          throw MalformedRecord(line, "mention " + std::to_string(m.mention_id) +
                                          " refers to missing utterance " +
                                          std::to_string(m.utterance_index));
        }
        check_span(m, scene.utterances[m.utterance_index].tokens.size(), line);
        scene.mentions.push_back(m);
      }
      check_unique_ids(scene.mentions, line);
    }
    if (j.contains("speaker_labels") && !j["speaker_labels"].is_null()) {
      if (!j["speaker_labels"].is_object()) throw MalformedRecord(line, "speaker_labels must be an object");
      for (const auto& [key, value] : j["speaker_labels"].items()) {
        auto slot = parse_slot_name(key);
        if (!slot) throw MalformedRecord(line, "speaker label key '" + key + "' is not a slot name");
        if (!value.is_string()) throw MalformedRecord(line, "speaker label must be a character name");
        scene.speaker_labels[*slot] = resolve(value.get<std::string>());
      }
    }
    const auto slots = scene.anonymous_slots();
    for (const auto& [slot, _] : scene.speaker_labels) {
      if (std::find(slots.begin(), slots.end(), slot) == slots.end()) {
        throw MalformedRecord(line, "label for slot " + slot_name(slot) + " which never speaks");
      }
    }
    if (scene.split != Split::kTest) {
      for (int slot : slots) {
        if (!scene.speaker_labels.count(slot)) {
          throw MalformedRecord(line, "slot " + slot_name(slot) + " lacks a gold label in split " +
                                          std::string(to_string(scene.split)));
        }
      }
    }
    if (j.contains("summary_ref") && !j["summary_ref"].is_null()) {
      if (!j["summary_ref"].is_string()) throw MalformedRecord(line, "summary_ref must be a string");
      scene.summary_ref = j["summary_ref"].get<std::string>();
    }
    return scene;
  }

  Summary parse_summary(const json& j, std::size_t line) {
    Summary summary;
    if (!j["summary_id"].is_string()) throw MalformedRecord(line, "summary_id must be a string");
    summary.summary_id = j["summary_id"].get<std::string>();
    summary.tokens = parse_tokens(j.value("tokens", json()), line, "summary");
    if (j.contains("mentions")) {
      if (!j["mentions"].is_array()) throw MalformedRecord(line, "mentions must be an array");
      int next = 0;
      for (const auto& jm : j["mentions"]) {
        MentionSpan m = parse_mention(jm, line, next++, true);
        check_span(m, summary.tokens.size(), line);
        summary.mentions.push_back(m);
      }
      check_unique_ids(summary.mentions, line);
    }
    return summary;
  }

  const CharacterRegistry& registry_;
  CorpusFormat format_;
  bool strict_;
};

}  // namespace

Corpus parse_corpus(std::istream& in, CharacterRegistry registry, CorpusFormat format) {
  RecordParser parser(registry, format, true);
  return parser.parse(in);
}

std::vector<Diagnostic> validate_corpus(std::istream& in, const CharacterRegistry& registry,
                                        CorpusFormat format) {
  RecordParser parser(registry, format, false);
  parser.parse(in);
  return std::move(parser.diagnostics);
}

Corpus load_corpus(const std::filesystem::path& corpus_file,
                   const std::filesystem::path& registry_file, CorpusFormat format) {
  auto registry = load_registry(registry_file);
  std::ifstream in(corpus_file);
  if (!in) throw IoError("cannot open corpus file " + corpus_file.string());
  return parse_corpus(in, std::move(registry), format);
}

Corpus load_corpus(const std::filesystem::path& dir, CorpusFormat format) {
  return load_corpus(dir / "corpus.jsonl", dir / "registry.txt", format);
}

namespace {

json mention_json(const MentionSpan& m, const CharacterRegistry& registry, bool summary_side) {
  json j;
  if (!summary_side) j["utt"] = m.utterance_index;
  j["start"] = m.start_token;
  j["end"] = m.end_token;
  j["gold"] = registry.name(m.gold_character);
  j["id"] = m.mention_id;
  return j;
}

}  // namespace

void write_corpus_records(std::ostream& out, const Corpus& corpus) {
  const auto& registry = corpus.registry;
  for (const auto& scene : corpus.scenes) {
    json j;
    j["scene_id"] = scene.scene_id;
    j["split"] = std::string(to_string(scene.split));
    j["utterances"] = json::array();
    for (const auto& u : scene.utterances) {
      j["utterances"].push_back(
          {{"speaker", u.speaker.anonymous ? slot_name(u.speaker.id) : registry.name(u.speaker.id)},
           {"tokens", u.tokens}});
    }
    j["mentions"] = json::array();
    for (const auto& m : scene.mentions) j["mentions"].push_back(mention_json(m, registry, false));
    j["speaker_labels"] = json::object();
    for (const auto& [slot, c] : scene.speaker_labels) j["speaker_labels"][slot_name(slot)] = registry.name(c);
    j["summary_ref"] = scene.summary_ref ? json(*scene.summary_ref) : json(nullptr);
    out << j.dump() << '\n';
  }
  for (const auto& summary : corpus.summaries) {
    json j;
    j["summary_id"] = summary.summary_id;
    j["tokens"] = summary.tokens;
    j["mentions"] = json::array();
    for (const auto& m : summary.mentions) j["mentions"].push_back(mention_json(m, registry, true));
    out << j.dump() << '\n';
  }
}

void write_registry(std::ostream& out, const CharacterRegistry& registry) {
  for (const auto& name : registry.names()) out << name << '\n';
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  std::ofstream reg(dir / "registry.txt");
  std::ofstream rec(dir / "corpus.jsonl");
  if (!reg || !rec) throw IoError("cannot write corpus into " + dir.string());
  write_registry(reg, corpus.registry);
  write_corpus_records(rec, corpus);
}

std::vector<CharacterId> scene_characters(const Scene& scene) {
  std::set<CharacterId> present;
  for (const auto& m : scene.mentions) present.insert(m.gold_character);
  for (const auto& [slot, c] : scene.speaker_labels) present.insert(c);
  return {present.begin(), present.end()};
}

AlignedSample align_characters(const Scene& scene, const Summary* summary,
                               const CharacterRegistry& registry) {
  AlignedSample sample{&scene, summary, {}};
  if (summary == nullptr) return sample;
  std::set<CharacterId> summary_side;
  for (const auto& m : summary->mentions) summary_side.insert(m.gold_character);
  for (CharacterId c : scene_characters(scene)) {
    if (!registry.is_reserved(c) && summary_side.count(c)) sample.shared_characters.push_back(c);
  }
  return sample;
}

std::vector<AlignedSample> align_split(const Corpus& corpus, Split split) {
  std::vector<AlignedSample> out;
  for (const Scene* scene : corpus.scenes_in(split)) {
    const Summary* summary = scene->summary_ref ? corpus.find_summary(*scene->summary_ref) : nullptr;
    out.push_back(align_characters(*scene, summary, corpus.registry));
  }
  return out;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  stats.character_frequency.assign(corpus.registry.size(), 0);
  for (Split split : {Split::kTrain, Split::kDev, Split::kTest}) stats.splits[split] = {};
  std::set<std::string> referenced;
  for (const auto& scene : corpus.scenes) {
    auto& s = stats.splits[scene.split];
    ++s.scenes;
    s.utterances += scene.utterances.size();
    s.mentions += scene.mentions.size();
    s.slots += scene.anonymous_slots().size();
    if (scene.summary_ref) {
      ++s.summaries;
      referenced.insert(*scene.summary_ref);
    }
    for (const auto& m : scene.mentions) ++stats.character_frequency[m.gold_character];
    for (const auto& [slot, c] : scene.speaker_labels) ++stats.character_frequency[c];
  }
  for (const auto& [split, s] : stats.splits) {
    stats.total.scenes += s.scenes;
    stats.total.utterances += s.utterances;
    stats.total.mentions += s.mentions;
    stats.total.slots += s.slots;
    stats.total.summaries += s.summaries;
  }
  return stats;
}

}  // namespace scriptcl
