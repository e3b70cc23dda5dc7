#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string_view>
#include <vector>

#include "scriptcl/coref_metrics.hpp"
#include "scriptcl/encoding.hpp"
#include "scriptcl/objectives.hpp"
#include "scriptcl/script_data.hpp"

namespace scriptcl {

// Linking predictions also drive coreference (clusters of equal labels).
enum class Task { kLinking, kGuessing };
std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view text);

struct ModelConfig {
  Task task = Task::kGuessing;
  EncoderConfig encoder;
  MlsaConfig mlsa;
  HeadConfig head;
  // One MLSA stack for both the conversation and the summary side.
  bool share_mlsa = true;
};

// Encoder, speaker table, slot pooler, MLSA stack(s) and classifier head,
// all registered in one ParameterStore.
class CharacterModel {
 public:
  CharacterModel(const ModelConfig& cfg, CharacterRegistry registry, Vocabulary vocab, std::uint64_t init_seed);

  CharacterModel(const CharacterModel&) = delete;
  CharacterModel& operator=(const CharacterModel&) = delete;

  // Deep copy: same configuration, copied parameter values.
  std::unique_ptr<CharacterModel> clone() const;

  // Task embeddings of a scene after MLSA: mentions for linking, anonymous
  // slots for guessing. Empty when the scene has none.
  EmbeddingSet conversation_embeddings(const Scene& scene, int sample_index) const;
  // Summary mention embeddings after MLSA; empty without mentions.
  EmbeddingSet summary_embeddings(const Summary& summary, int sample_index) const;
  ad::Var logits(const EmbeddingSet& embeddings) const;

  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const CharacterRegistry& registry() const { return registry_; }
  const ToyEncoder& encoder() const { return *encoder_; }
  const Mlsa& conversation_mlsa() const { return conversation_mlsa_; }
  const Mlsa& summary_mlsa() const { return share_ ? conversation_mlsa_ : summary_mlsa_; }
  const ClassifierHead& head() const { return head_; }
  const SpeakerEmbeddingTable& speakers() const { return speakers_; }
  const AttentionPooler& pooler() const { return pooler_; }

 private:
  ModelConfig cfg_;
  CharacterRegistry registry_;
  ParameterStore params_;
  std::unique_ptr<ToyEncoder> encoder_;
  SpeakerEmbeddingTable speakers_;
  AttentionPooler pooler_;
  Mlsa conversation_mlsa_;
  Mlsa summary_mlsa_;
  bool share_ = true;
  ClassifierHead head_;
};

struct ScenePrediction {
  std::map<int, CharacterId> mentions;  // linking: mention id -> character
  std::map<int, CharacterId> slots;     // guessing: slot -> character
  Clustering clusters;                  // linking only
};

ScenePrediction predict(const CharacterModel& model, const Scene& scene);

// Groups mentions by predicted character. Mentions labelled with a reserved
// registry entry stay singletons. `scored` lists the mention universe; a
// mention without a prediction raises MissingPrediction.
Clustering clusters_from_linking(const std::map<int, CharacterId>& predictions, std::span<const int> scored,
                                 const CharacterRegistry& registry);
// Gold clustering of a scene under the same convention.
Clustering gold_clusters(const Scene& scene, const CharacterRegistry& registry);

struct EvalReport {
  ClassificationReport classification;
  std::optional<CorefReport> coreference;  // linking task only
  std::size_t items = 0;
};

EvalReport evaluate(const CharacterModel& model, const Corpus& corpus, Split split);

}  // namespace scriptcl
