#include "scriptcl/reporting.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "scriptcl/error.hpp"

namespace scriptcl {

using nlohmann::json;

namespace {

// Non-empty, non-comment lines split on tabs, with 1-based line numbers.
template <typename F>
void for_each_record(std::istream& in, std::size_t fields, F&& f) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> parts;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, '\t')) parts.push_back(part);
    if (parts.size() != fields) {
      throw MalformedRecord(line_no, "expected " + std::to_string(fields) + " tab-separated fields, got " +
                                         std::to_string(parts.size()));
    }
    f(parts, line_no);
  }
}

int parse_int(const std::string& text, std::size_t line_no, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw MalformedRecord(line_no, std::string(what) + " is not an integer: '" + text + "'");
  }
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

using ItemKey = std::pair<std::string, int>;

std::map<ItemKey, std::string> index_rows(const std::vector<PredictionRow>& rows, const char* what) {
  std::map<ItemKey, std::string> out;
  for (const auto& r : rows) {
    if (!out.emplace(ItemKey{r.scene_id, r.item}, r.character).second) {
      throw InvalidInput(std::string("duplicate ") + what + " for " + r.scene_id + "/" + std::to_string(r.item));
    }
  }
  return out;
}

CharacterId resolve(const CharacterRegistry& registry, const std::string& name) {
  auto id = registry.find(name);
  if (!id) throw UnknownCharacter("character '" + name + "' is not in the registry");
  return *id;
}

json prf_json(const PRF& p) { return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}}; }

json bucket_json(const BucketScore& b) {
  json j = {{"items", b.items}, {"correct", b.correct}};
  j["accuracy"] = b.accuracy ? json(*b.accuracy) : json(nullptr);
  return j;
}

std::string prf_line(const std::string& name, const PRF& p) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s %9.4f %9.4f %9.4f\n", name.c_str(), p.precision, p.recall, p.f1);
  return buf;
}

std::string prf_header() {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s %9s %9s %9s\n", "metric", "P", "R", "F1");
  return buf;
}

}  // namespace

std::vector<PredictionRow> parse_predictions(std::istream& in) {
  std::vector<PredictionRow> rows;
  for_each_record(in, 3, [&](const std::vector<std::string>& f, std::size_t line_no) {
    if (f[0].empty() || f[2].empty()) throw MalformedRecord(line_no, "empty scene id or character");
    rows.push_back({f[0], parse_int(f[1], line_no, "item"), f[2]});
  });
  return rows;
}

std::vector<PredictionRow> read_predictions(const std::filesystem::path& path) {
  auto in = open(path);
  return parse_predictions(in);
}

void write_predictions(std::ostream& out, const std::vector<PredictionRow>& rows) {
  for (const auto& r : rows) out << r.scene_id << '\t' << r.item << '\t' << r.character << '\n';
}

std::vector<PredictionRow> predict_split(const CharacterModel& model, const Corpus& corpus, Split split) {
  std::vector<PredictionRow> rows;
  const auto& registry = model.registry();
  const bool linking = model.config().task == Task::kLinking;
  for (const Scene* scene : corpus.scenes_in(split)) {
    const ScenePrediction p = predict(model, *scene);
    for (const auto& [item, c] : linking ? p.mentions : p.slots) {
      rows.push_back({scene->scene_id, item, registry.name(c)});
    }
  }
  return rows;
}

std::vector<PredictionRow> gold_rows(const Corpus& corpus, Task task, Split split) {
  std::vector<PredictionRow> rows;
  for (const Scene* scene : corpus.scenes_in(split)) {
    if (task == Task::kLinking) {
      std::vector<std::pair<int, CharacterId>> items;
      for (const auto& m : scene->mentions) items.emplace_back(m.mention_id, m.gold_character);
      std::sort(items.begin(), items.end());
      for (const auto& [id, c] : items) rows.push_back({scene->scene_id, id, corpus.registry.name(c)});
    } else {
      for (const auto& [slot, c] : scene->speaker_labels) {
        rows.push_back({scene->scene_id, slot, corpus.registry.name(c)});
      }
    }
  }
  return rows;
}

ClassificationReport score_predictions(const std::vector<PredictionRow>& gold, const std::vector<PredictionRow>& pred,
                                       const CharacterRegistry& registry) {
  const auto predicted = index_rows(pred, "prediction");
  index_rows(gold, "gold label");
  std::vector<int> g, p;
  for (const auto& r : gold) {
    auto it = predicted.find({r.scene_id, r.item});
    if (it == predicted.end()) {
      throw MissingPrediction("no prediction for " + r.scene_id + "/" + std::to_string(r.item));
    }
    g.push_back(resolve(registry, r.character));
    p.push_back(resolve(registry, it->second));
  }
  return micro_macro_f1(g, p, static_cast<int>(registry.size()));
}

SceneClusterings parse_clusterings(std::istream& in) {
  std::map<std::string, std::map<std::string, std::vector<int>>> grouped;
  std::map<std::string, std::set<int>> seen;
  for_each_record(in, 3, [&](const std::vector<std::string>& f, std::size_t line_no) {
    if (f[0].empty() || f[2].empty()) throw MalformedRecord(line_no, "empty scene id or cluster id");
    const int mention = parse_int(f[1], line_no, "mention id");
    if (!seen[f[0]].insert(mention).second) {
      throw MalformedRecord(line_no, "mention " + f[1] + " listed twice in scene " + f[0]);
    }
    grouped[f[0]][f[2]].push_back(mention);
  });
  SceneClusterings out;
  for (auto& [scene, clusters] : grouped) {
    Clustering& c = out[scene];
    for (auto& [_, members] : clusters) {
      std::sort(members.begin(), members.end());
      c.clusters.push_back(std::move(members));
    }
    std::sort(c.clusters.begin(), c.clusters.end());
  }
  return out;
}

SceneClusterings read_clusterings(const std::filesystem::path& path) {
  auto in = open(path);
  return parse_clusterings(in);
}

void write_clusterings(std::ostream& out, const SceneClusterings& clusterings) {
  for (const auto& [scene, c] : clusterings) {
    std::vector<std::pair<int, std::size_t>> rows;
    for (std::size_t k = 0; k < c.clusters.size(); ++k) {
      for (int m : c.clusters[k]) rows.emplace_back(m, k);
    }
    std::sort(rows.begin(), rows.end());
    for (const auto& [m, k] : rows) out << scene << '\t' << m << '\t' << k << '\n';
  }
}

SceneClusterings gold_clusterings(const Corpus& corpus, Split split) {
  SceneClusterings out;
  for (const Scene* scene : corpus.scenes_in(split)) {
    if (!scene->mentions.empty()) out[scene->scene_id] = gold_clusters(*scene, corpus.registry);
  }
  return out;
}

SceneClusterings predicted_clusterings(const CharacterModel& model, const Corpus& corpus, Split split) {
  SceneClusterings out;
  for (const Scene* scene : corpus.scenes_in(split)) {
    if (!scene->mentions.empty()) out[scene->scene_id] = predict(model, *scene).clusters;
  }
  return out;
}

CorefReport score_clusterings(const SceneClusterings& gold, const SceneClusterings& pred) {
  std::vector<GoldPredPair> pairs;
  for (const auto& [scene, g] : gold) {
    auto it = pred.find(scene);
    if (it == pred.end()) throw MentionUniverseMismatch("scene " + scene + " has no predicted clustering");
    pairs.push_back({g, it->second});
  }
  for (const auto& [scene, _] : pred) {
    if (!gold.count(scene)) throw MentionUniverseMismatch("scene " + scene + " has no gold clustering");
  }
  return score_coreference(pairs);
}

std::string_view to_string(EvidenceBucket bucket) {
  switch (bucket) {
    case EvidenceBucket::kGlobalInDepth: return "global_in_depth";
    case EvidenceBucket::kLocalTextual: return "local_textual";
    case EvidenceBucket::kDropped: return "dropped";
  }
  return "dropped";
}

std::optional<EvidenceBucket> merge_evidence(std::string_view category) {
  static const std::map<std::string_view, EvidenceBucket> kMerge = {
      {"attribute", EvidenceBucket::kGlobalInDepth},  {"relation", EvidenceBucket::kGlobalInDepth},
      {"status", EvidenceBucket::kGlobalInDepth},     {"linguistic", EvidenceBucket::kGlobalInDepth},
      {"linguistics", EvidenceBucket::kGlobalInDepth}, {"memory", EvidenceBucket::kGlobalInDepth},
      {"personality", EvidenceBucket::kGlobalInDepth}, {"background", EvidenceBucket::kLocalTextual},
      {"mention", EvidenceBucket::kLocalTextual},     {"exclusion", EvidenceBucket::kDropped},
  };
  auto it = kMerge.find(category);
  if (it == kMerge.end()) return std::nullopt;
  return it->second;
}

std::vector<EvidenceAnnotation> parse_evidence(std::istream& in) {
  std::vector<EvidenceAnnotation> out;
  std::set<ItemKey> seen;
  for_each_record(in, 3, [&](const std::vector<std::string>& f, std::size_t line_no) {
    const int slot = parse_int(f[1], line_no, "slot");
    if (!merge_evidence(f[2])) throw MalformedRecord(line_no, "unknown evidence category '" + f[2] + "'");
    if (!seen.insert({f[0], slot}).second) throw MalformedRecord(line_no, "item annotated twice");
    out.push_back({f[0], slot, f[2]});
  });
  return out;
}

std::vector<EvidenceAnnotation> read_evidence(const std::filesystem::path& path) {
  auto in = open(path);
  return parse_evidence(in);
}

EvidenceReport evidence_breakdown(const std::vector<PredictionRow>& gold, const std::vector<PredictionRow>& pred,
                                  const std::vector<EvidenceAnnotation>& annotations) {
  const auto g = index_rows(gold, "gold label");
  const auto p = index_rows(pred, "prediction");
  EvidenceReport report;
  for (const auto& a : annotations) {
    const auto bucket = merge_evidence(a.category);
    if (!bucket) throw InvalidInput("unknown evidence category '" + a.category + "'");
    if (*bucket == EvidenceBucket::kDropped) {
      ++report.dropped;
      continue;
    }
    const ItemKey key{a.scene_id, a.slot};
    auto gi = g.find(key);
    if (gi == g.end()) throw InvalidInput("no gold label for " + a.scene_id + "/" + std::to_string(a.slot));
    auto pi = p.find(key);
    if (pi == p.end()) throw MissingPrediction("no prediction for " + a.scene_id + "/" + std::to_string(a.slot));
    BucketScore& b = *bucket == EvidenceBucket::kGlobalInDepth ? report.global_in_depth : report.local_textual;
    ++b.items;
    if (gi->second == pi->second) ++b.correct;
  }
  for (BucketScore* b : {&report.global_in_depth, &report.local_textual}) {
    if (b->items) b->accuracy = static_cast<double>(b->correct) / static_cast<double>(b->items);
  }
  return report;
}

EmbeddingExport export_embeddings(const CharacterModel& model, const Corpus& corpus, const ExportOptions& options) {
  if (options.per_character < 1) throw InvalidInput("per-character count must be >= 1");
  const auto& registry = model.registry();
  std::map<CharacterId, std::vector<CharacterEmbedding>> by_character;
  auto collect = [&](const EmbeddingSet& set) {
    for (auto& e : materialize(set)) {
      if (e.tag.character < 0 || registry.is_reserved(e.tag.character)) continue;
      by_character[e.tag.character].push_back(std::move(e));
    }
  };
  int index = 0;
  for (const Scene* scene : corpus.scenes_in(options.split)) {
    collect(model.conversation_embeddings(*scene, index));
    if (options.include_summary && scene->summary_ref) {
      if (const Summary* s = corpus.find_summary(*scene->summary_ref)) collect(model.summary_embeddings(*s, index));
    }
    ++index;
  }

  EmbeddingExport out;
  std::mt19937_64 rng(options.seed);
  const auto want = static_cast<std::size_t>(options.per_character);
  for (CharacterId c = 0; c < static_cast<CharacterId>(registry.size()); ++c) {
    if (registry.is_reserved(c)) continue;
    auto& pool = by_character[c];
    std::shuffle(pool.begin(), pool.end(), rng);
    // Prefer one embedding per sample, then fill from the rest.
    std::vector<bool> taken(pool.size(), false);
    std::set<int> samples;
    std::vector<CharacterEmbedding> chosen;
    for (std::size_t i = 0; i < pool.size() && chosen.size() < want; ++i) {
      if (samples.insert(pool[i].tag.sample_index).second) {
        taken[i] = true;
        chosen.push_back(pool[i]);
      }
    }
    for (std::size_t i = 0; i < pool.size() && chosen.size() < want; ++i) {
      if (!taken[i]) chosen.push_back(pool[i]);
    }
    if (chosen.size() < want) {
      out.warnings.push_back("character '" + registry.name(c) + "' has " + std::to_string(chosen.size()) +
                             " embeddings, fewer than the " + std::to_string(want) + " requested");
    }
    std::sort(chosen.begin(), chosen.end(), [](const CharacterEmbedding& a, const CharacterEmbedding& b) {
      return std::tie(a.tag.sample_index, a.tag.source, a.tag.item_id) <
             std::tie(b.tag.sample_index, b.tag.source, b.tag.item_id);
    });
    for (auto& e : chosen) out.rows.push_back(std::move(e));
  }
  return out;
}

void write_embedding_table(std::ostream& out, const EmbeddingExport& data, const CharacterRegistry& registry) {
  const Eigen::Index d = data.rows.empty() ? 0 : data.rows.front().vector.size();
  out << "character\tsample_index\tsource";
  for (Eigen::Index k = 0; k < d; ++k) out << "\te" << k;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& e : data.rows) {
    out << registry.name(e.tag.character) << '\t' << e.tag.sample_index << '\t' << to_string(e.tag.source);
    for (Eigen::Index k = 0; k < e.vector.size(); ++k) out << '\t' << e.vector[k];
    out << '\n';
  }
}

std::string report_json(const CorefReport& r) {
  return json{{"b3", prf_json(r.b_cubed)},
              {"ceaf_phi4", prf_json(r.ceaf_phi4)},
              {"blanc", prf_json(r.blanc)},
              {"conll_avg", r.conll_avg}}
      .dump(2);
}

std::string report_json(const ClassificationReport& r) {
  return json{{"micro", prf_json(r.micro)}, {"macro", prf_json(r.macro)}}.dump(2);
}

std::string report_json(const EvidenceReport& r) {
  return json{{"global_in_depth", bucket_json(r.global_in_depth)},
              {"local_textual", bucket_json(r.local_textual)},
              {"dropped", r.dropped}}
      .dump(2);
}

std::string render_table(const CorefReport& r) {
  char avg[64];
  std::snprintf(avg, sizeof avg, "%-10s %29.4f\n", "avg F1", r.conll_avg);
  return prf_header() + prf_line("B3", r.b_cubed) + prf_line("CEAFphi4", r.ceaf_phi4) + prf_line("BLANC", r.blanc) +
         avg;
}

std::string render_table(const ClassificationReport& r) {
  return prf_header() + prf_line("micro", r.micro) + prf_line("macro", r.macro);
}

std::string render_table(const EvidenceReport& r) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-16s %7s %8s %9s\n", "bucket", "items", "correct", "accuracy");
  out += buf;
  auto row = [&](const char* name, const BucketScore& b) {
    if (b.accuracy) {
      std::snprintf(buf, sizeof buf, "%-16s %7zu %8zu %9.4f\n", name, b.items, b.correct, *b.accuracy);
    } else {
      std::snprintf(buf, sizeof buf, "%-16s %7zu %8zu %9s\n", name, b.items, b.correct, "-");
    }
    out += buf;
  };
  row("global_in_depth", r.global_in_depth);
  row("local_textual", r.local_textual);
  std::snprintf(buf, sizeof buf, "%-16s %7zu\n", "dropped", r.dropped);
  return out + buf;
}

}  // namespace scriptcl
