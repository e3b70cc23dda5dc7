#include "scriptcl/model.hpp"

#include <random>
#include <set>

#include "scriptcl/error.hpp"

namespace scriptcl {

std::string_view to_string(Task task) { return task == Task::kLinking ? "linking" : "guessing"; }

std::optional<Task> parse_task(std::string_view text) {
  if (text == "linking" || text == "coref" || text == "linking_coref") return Task::kLinking;
  if (text == "guessing") return Task::kGuessing;
  return std::nullopt;
}

CharacterModel::CharacterModel(const ModelConfig& cfg, CharacterRegistry registry, Vocabulary vocab,
                               std::uint64_t init_seed)
    : cfg_(cfg), registry_(std::move(registry)), share_(cfg.share_mlsa) {
  std::mt19937_64 rng(init_seed);
  const int d = cfg.encoder.hidden_size;
  encoder_ = std::make_unique<ToyEncoder>(params_, std::move(vocab), cfg.encoder, rng);
  speakers_ = SpeakerEmbeddingTable(params_, registry_.size(), d, rng);
  pooler_ = AttentionPooler(params_, "pooler", d, rng);
  conversation_mlsa_ = Mlsa(params_, share_ ? "mlsa" : "mlsa.conversation", d, cfg.mlsa, rng);
  if (!share_) summary_mlsa_ = Mlsa(params_, "mlsa.summary", d, cfg.mlsa, rng);
  head_ = ClassifierHead(params_, "head", d, registry_.size(), cfg.head, rng);
}

std::unique_ptr<CharacterModel> CharacterModel::clone() const {
  auto copy = std::make_unique<CharacterModel>(cfg_, registry_, encoder_->vocabulary(), 0);
  copy->params_.copy_values_from(params_);
  return copy;
}

EmbeddingSet CharacterModel::conversation_embeddings(const Scene& scene, int sample_index) const {
  EmbeddingSet raw;
  if (cfg_.task == Task::kLinking) {
    if (scene.mentions.empty()) return {};
    const auto encoding = encode_conversation(scene, *encoder_);
    raw = extract_mention_embeddings(encoding, scene.mentions, speakers_, sample_index);
  } else {
    if (scene.anonymous_slots().empty()) return {};
    const auto encoding = encode_conversation(scene, *encoder_);
    raw = extract_slot_embeddings(scene, encoding, pooler_, sample_index);
  }
  return mlsa_refine(raw, conversation_mlsa_);
}

EmbeddingSet CharacterModel::summary_embeddings(const Summary& summary, int sample_index) const {
  EmbeddingSet raw = encode_summary(summary, *encoder_, sample_index);
  if (raw.empty()) return raw;
  return mlsa_refine(raw, summary_mlsa());
}

ad::Var CharacterModel::logits(const EmbeddingSet& embeddings) const { return head_.logits(embeddings.vectors); }

namespace {

std::vector<CharacterId> argmax_rows(const ad::Matrix& m) {
  std::vector<CharacterId> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    m.row(i).maxCoeff(&best);
    out.push_back(static_cast<CharacterId>(best));
  }
  return out;
}

}  // namespace

ScenePrediction predict(const CharacterModel& model, const Scene& scene) {
  ScenePrediction out;
  const EmbeddingSet emb = model.conversation_embeddings(scene, 0);
  if (!emb.empty()) {
    const auto labels = argmax_rows(model.logits(emb).value());
    for (std::size_t i = 0; i < emb.size(); ++i) {
      auto& target = model.config().task == Task::kLinking ? out.mentions : out.slots;
      target[emb.tags[i].item_id] = labels[i];
    }
  }
  if (model.config().task == Task::kLinking) {
    std::vector<int> ids;
    for (const auto& m : scene.mentions) ids.push_back(m.mention_id);
    out.clusters = clusters_from_linking(out.mentions, ids, model.registry());
  }
  return out;
}

Clustering clusters_from_linking(const std::map<int, CharacterId>& predictions, std::span<const int> scored,
                                 const CharacterRegistry& registry) {
  std::map<CharacterId, std::vector<int>> groups;
  Clustering out;
  for (int m : scored) {
    auto it = predictions.find(m);
    if (it == predictions.end()) throw MissingPrediction("mention " + std::to_string(m) + " has no prediction");
    if (registry.is_reserved(it->second)) {
      out.clusters.push_back({m});
    } else {
      groups[it->second].push_back(m);
    }
  }
  for (auto& [_, members] : groups) out.clusters.push_back(std::move(members));
  return out;
}

Clustering gold_clusters(const Scene& scene, const CharacterRegistry& registry) {
  std::map<int, CharacterId> gold;
  std::vector<int> ids;
  for (const auto& m : scene.mentions) {
    gold[m.mention_id] = m.gold_character;
    ids.push_back(m.mention_id);
  }
  return clusters_from_linking(gold, ids, registry);
}

EvalReport evaluate(const CharacterModel& model, const Corpus& corpus, Split split) {
  EvalReport report;
  std::vector<int> gold, pred;
  std::vector<GoldPredPair> pairs;
  const bool linking = model.config().task == Task::kLinking;
  for (const Scene* scene : corpus.scenes_in(split)) {
    const ScenePrediction p = predict(model, *scene);
    if (linking) {
      for (const auto& m : scene->mentions) {
        gold.push_back(m.gold_character);
        pred.push_back(p.mentions.at(m.mention_id));
      }
      if (!scene->mentions.empty()) pairs.push_back({gold_clusters(*scene, model.registry()), p.clusters});
    } else {
      for (const auto& [slot, c] : p.slots) {
        auto it = scene->speaker_labels.find(slot);
        if (it == scene->speaker_labels.end()) continue;
        gold.push_back(it->second);
        pred.push_back(c);
      }
    }
  }
  report.items = gold.size();
  report.classification = micro_macro_f1(gold, pred, static_cast<int>(model.registry().size()));
  if (linking && !pairs.empty()) {
    try {
      report.coreference = score_coreference(pairs);
    } catch (const TooFewMentions&) {
      report.coreference.reset();
    }
  }
  return report;
}

}  // namespace scriptcl
