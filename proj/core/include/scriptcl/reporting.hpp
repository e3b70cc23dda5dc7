#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scriptcl/coref_metrics.hpp"
#include "scriptcl/model.hpp"

namespace scriptcl {

// One line of a prediction file: scene_id TAB item TAB character name, where
// item is a mention id (linking) or a slot index (guessing).
struct PredictionRow {
  std::string scene_id;
  int item = 0;
  std::string character;
};

std::vector<PredictionRow> parse_predictions(std::istream& in);
std::vector<PredictionRow> read_predictions(const std::filesystem::path& path);
void write_predictions(std::ostream& out, const std::vector<PredictionRow>& rows);

// Model predictions over a split, ordered by scene then item.
std::vector<PredictionRow> predict_split(const CharacterModel& model, const Corpus& corpus, Split split);
// Gold labels of a split in the same format. Unlabelled slots are skipped.
std::vector<PredictionRow> gold_rows(const Corpus& corpus, Task task, Split split);

// Micro/macro F1 over the gold rows. Every gold item needs a prediction;
// names are resolved against `registry`.
ClassificationReport score_predictions(const std::vector<PredictionRow>& gold,
                                       const std::vector<PredictionRow>& pred,
                                       const CharacterRegistry& registry);

// Clustering files: scene_id TAB mention_id TAB cluster_id.
using SceneClusterings = std::map<std::string, Clustering>;
SceneClusterings parse_clusterings(std::istream& in);
SceneClusterings read_clusterings(const std::filesystem::path& path);
void write_clusterings(std::ostream& out, const SceneClusterings& clusterings);
SceneClusterings gold_clusterings(const Corpus& corpus, Split split);
SceneClusterings predicted_clusterings(const CharacterModel& model, const Corpus& corpus, Split split);

// Both files must list the same scenes and mention universes.
CorefReport score_clusterings(const SceneClusterings& gold, const SceneClusterings& pred);

enum class EvidenceBucket { kGlobalInDepth, kLocalTextual, kDropped };
std::string_view to_string(EvidenceBucket bucket);
// nullopt for a category outside the closed set.
std::optional<EvidenceBucket> merge_evidence(std::string_view category);

// Annotation files: scene_id TAB slot TAB category.
struct EvidenceAnnotation {
  std::string scene_id;
  int slot = 0;
  std::string category;
};
std::vector<EvidenceAnnotation> parse_evidence(std::istream& in);
std::vector<EvidenceAnnotation> read_evidence(const std::filesystem::path& path);

struct BucketScore {
  std::size_t items = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;  // empty bucket: no accuracy
};

struct EvidenceReport {
  BucketScore global_in_depth;
  BucketScore local_textual;
  std::size_t dropped = 0;
};

EvidenceReport evidence_breakdown(const std::vector<PredictionRow>& gold, const std::vector<PredictionRow>& pred,
                                  const std::vector<EvidenceAnnotation>& annotations);

struct ExportOptions {
  Split split = Split::kDev;
  int per_character = 6;
  std::uint64_t seed = 7;
  bool include_summary = false;
};

struct EmbeddingExport {
  std::vector<CharacterEmbedding> rows;
  std::vector<std::string> warnings;
};

// Up to `per_character` labelled embeddings per non-reserved character,
// spread over distinct samples where possible. sample_index is the scene's
// position within the split.
EmbeddingExport export_embeddings(const CharacterModel& model, const Corpus& corpus, const ExportOptions& options);
// TSV with a header: character, sample_index, source, e0 .. e{d-1}.
void write_embedding_table(std::ostream& out, const EmbeddingExport& data, const CharacterRegistry& registry);

// Structured reports with stable keys, and plain-text tables for humans.
std::string report_json(const CorefReport& report);
std::string report_json(const ClassificationReport& report);
std::string report_json(const EvidenceReport& report);
std::string render_table(const CorefReport& report);
std::string render_table(const ClassificationReport& report);
std::string render_table(const EvidenceReport& report);

}  // namespace scriptcl
