#include "scriptcl/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "scriptcl/checkpoint.hpp"
#include "scriptcl/error.hpp"

namespace scriptcl {

using nlohmann::json;

void TaskRatios::validate() const {
  for (double w : {lambda, alpha, beta}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidConfig("task ratios must be finite and non-negative");
  }
  if (lambda == 0.0 && alpha == 0.0 && beta == 0.0) throw NoActiveLoss("all task ratios are zero");
}

void StageConfig::validate(const std::string& stage) const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidConfig(stage + ".learning_rate must be positive");
  }
  if (batch_size < 1) throw InvalidConfig(stage + ".batch_size must be >= 1");
  if (epochs < 0) throw InvalidConfig(stage + ".epochs must be >= 0");
}

void TrainConfig::validate() const {
  ratios.validate();
  contrastive.validate();
  stage1.validate("stage1");
  stage2.validate("stage2");
  if (model.encoder.hidden_size < 1) throw InvalidConfig("model.hidden_size must be >= 1");
  if (model.mlsa.n_blocks < 1) throw InvalidConfig("model.mlsa_blocks must be >= 1");
}

namespace {

json stage_json(const StageConfig& s) {
  return {{"learning_rate", s.learning_rate}, {"batch_size", s.batch_size}, {"epochs", s.epochs}};
}

json config_json(const TrainConfig& c) {
  const auto& m = c.model;
  return {
      {"task", std::string(to_string(m.task))},
      {"corpus", c.corpus.string()},
      {"output_dir", c.output_dir.string()},
      {"seed", c.seed},
      {"log_steps", c.log_steps},
      {"temperature", c.contrastive.temperature},
      {"ratios", {{"lambda", c.ratios.lambda}, {"alpha", c.ratios.alpha}, {"beta", c.ratios.beta}}},
      {"stage1", stage_json(c.stage1)},
      {"stage2", stage_json(c.stage2)},
      {"model",
       {{"hidden_size", m.encoder.hidden_size},
        {"max_length", m.encoder.max_length},
        {"encoder_heads", m.encoder.attention.n_heads},
        {"encoder_ffn", m.encoder.attention.ffn_width},
        {"mlsa_blocks", m.mlsa.n_blocks},
        {"mlsa_heads", m.mlsa.attention.n_heads},
        {"mlsa_ffn", m.mlsa.attention.ffn_width},
        {"head_hidden", m.head.hidden_width},
        {"share_mlsa", m.share_mlsa}}},
  };
}

void check_known_keys(const json& given, const json& schema, const std::string& prefix) {
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) throw InvalidConfig("unknown config key '" + path + "'");
    if (value.is_object()) {
      if (!schema[key].is_object()) throw InvalidConfig("config key '" + path + "' is not a section");
      check_known_keys(value, schema[key], path);
    }
  }
}

template <typename T>
T field(const json& doc, const json::json_pointer& ptr) {
  try {
    return doc.at(ptr).get<T>();
  } catch (const json::exception& e) {
    throw InvalidConfig("config key '" + ptr.to_string() + "': " + e.what());
  }
}

StageConfig stage_from(const json& doc, const std::string& name) {
  StageConfig s;
  s.learning_rate = field<double>(doc, json::json_pointer("/" + name + "/learning_rate"));
  s.batch_size = field<int>(doc, json::json_pointer("/" + name + "/batch_size"));
  s.epochs = field<int>(doc, json::json_pointer("/" + name + "/epochs"));
  return s;
}

TrainConfig config_from(const json& doc) {
  using P = json::json_pointer;
  TrainConfig c;
  auto task = parse_task(field<std::string>(doc, P("/task")));
  if (!task) throw InvalidConfig("task must be 'linking' or 'guessing'");
  c.model.task = *task;
  c.corpus = field<std::string>(doc, P("/corpus"));
  c.output_dir = field<std::string>(doc, P("/output_dir"));
  c.seed = field<std::uint64_t>(doc, P("/seed"));
  c.log_steps = field<bool>(doc, P("/log_steps"));
  c.contrastive.temperature = field<double>(doc, P("/temperature"));
  c.ratios.lambda = field<double>(doc, P("/ratios/lambda"));
  c.ratios.alpha = field<double>(doc, P("/ratios/alpha"));
  c.ratios.beta = field<double>(doc, P("/ratios/beta"));
  c.stage1 = stage_from(doc, "stage1");
  c.stage2 = stage_from(doc, "stage2");
  c.model.encoder.hidden_size = field<int>(doc, P("/model/hidden_size"));
  c.model.encoder.max_length = field<int>(doc, P("/model/max_length"));
  c.model.encoder.attention.n_heads = field<int>(doc, P("/model/encoder_heads"));
  c.model.encoder.attention.ffn_width = field<int>(doc, P("/model/encoder_ffn"));
  c.model.mlsa.n_blocks = field<int>(doc, P("/model/mlsa_blocks"));
  c.model.mlsa.attention.n_heads = field<int>(doc, P("/model/mlsa_heads"));
  c.model.mlsa.attention.ffn_width = field<int>(doc, P("/model/mlsa_ffn"));
  c.model.head.hidden_width = field<int>(doc, P("/model/head_hidden"));
  c.model.share_mlsa = field<bool>(doc, P("/model/share_mlsa"));
  return c;
}

}  // namespace

TrainConfig parse_train_config(const std::string& json_text, const std::map<std::string, std::string>& overrides) {
  const json schema = config_json(TrainConfig{});
  json doc = schema;
  json given;
  try {
    given = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidConfig(std::string("config is not valid JSON: ") + e.what());
  }
  if (!given.is_object()) throw InvalidConfig("config must be a JSON object");
  check_known_keys(given, schema, "");
  doc.merge_patch(given);
  for (const auto& [key, text] : overrides) {
    std::string pointer = "/" + key;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const json::json_pointer ptr(pointer);
    if (!schema.contains(ptr) || schema.at(ptr).is_object()) throw InvalidConfig("unknown config key '" + key + "'");
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    if (schema.at(ptr).is_string() && !value.is_string()) value = text;
    doc[ptr] = value;
  }
  TrainConfig cfg = config_from(doc);
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_train_config(buffer.str(), overrides);
}

std::string train_config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

std::vector<Batch> make_batches(const Corpus& corpus, Split split, Task task, int batch_size, std::mt19937_64* rng) {
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  std::vector<AlignedSample> usable;
  for (auto& sample : align_split(corpus, split)) {
    const Scene& s = *sample.scene;
    const bool has_items = task == Task::kLinking ? !s.mentions.empty() : !s.speaker_labels.empty();
    if (has_items) usable.push_back(std::move(sample));
  }
  std::vector<std::size_t> order(usable.size());
  std::iota(order.begin(), order.end(), 0);
  if (rng) std::shuffle(order.begin(), order.end(), *rng);
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    Batch b;
    for (std::size_t j = i; j < std::min(order.size(), i + static_cast<std::size_t>(batch_size)); ++j) {
      b.samples.push_back(usable[order[j]]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

namespace {

BatchObjective objective(const Batch& batch, const CharacterModel& model, const TaskRatios& ratios,
                         const ContrastiveConfig& cfg, std::mt19937_64* rng, int stage) {
  if (batch.samples.empty()) throw EmptyBatch("batch has no samples");
  BatchObjective out;
  out.record.stage = stage;
  const int n = static_cast<int>(batch.samples.size());

  std::vector<EmbeddingSet> conversation(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    conversation[static_cast<std::size_t>(i)] = model.conversation_embeddings(*batch.samples[static_cast<std::size_t>(i)].scene, i);
  }

  std::vector<ad::Var> terms;
  bool supervised = false;
  if (ratios.lambda > 0.0) {
    const EmbeddingSet pooled = concat_embeddings(conversation);
    std::vector<int> rows, labels;
    for (std::size_t r = 0; r < pooled.tags.size(); ++r) {
      if (pooled.tags[r].character >= 0) {
        rows.push_back(static_cast<int>(r));
        labels.push_back(pooled.tags[r].character);
      }
    }
    if (!labels.empty()) {
      const ad::Var logits = model.head().logits(ad::gather_rows(pooled.vectors, rows));
      const ad::Var l_sup = supervised_loss_from_logits(logits, labels);
      out.record.l_sup = l_sup.item();
      terms.push_back(ratios.lambda == 1.0 ? l_sup : ad::scale(l_sup, ratios.lambda));
      supervised = true;
    }
  }
  if (!supervised && ratios.alpha == 0.0 && ratios.beta == 0.0) {
    throw NoActiveLoss("no labelled items and no contrastive term is active");
  }

  if (stage == 1) {
    out.record.l_sum = 0.0;
    out.record.l_cross = 0.0;
  }
  if (ratios.alpha > 0.0) {
    std::vector<ad::Var> per_sample;
    for (int i = 0; i < n; ++i) {
      const auto& sample = batch.samples[static_cast<std::size_t>(i)];
      const auto& conv = conversation[static_cast<std::size_t>(i)];
      PairSet pairs;
      if (sample.summary && !sample.shared_characters.empty() && !conv.empty()) {
        const EmbeddingSet summary = model.summary_embeddings(*sample.summary, i);
        if (!summary.empty()) pairs = sample_summary_conversation_pairs(sample, conv, summary, *rng);
      }
      if (pairs.empty()) {
        ++out.record.samples_without_sum_pairs;
        continue;
      }
      out.record.sum_pairs += pairs.size();
      per_sample.push_back(summary_conversation_loss(pairs, cfg));
    }
    if (!per_sample.empty()) {
      const ad::Var stacked = per_sample.size() == 1 ? per_sample.front() : ad::concat_rows(per_sample);
      const ad::Var l_sum = ad::scale(ad::sum(stacked), 1.0 / static_cast<double>(per_sample.size()));
      out.record.l_sum = l_sum.item();
      terms.push_back(ad::scale(l_sum, ratios.alpha));
    }
  }
  if (ratios.beta > 0.0) {
    const PairSet pairs = sample_cross_pairs(conversation, *rng, &model.registry());
    if (pairs.empty()) {
      out.record.cross_pairs_missing = true;
    } else {
      out.record.cross_pairs = pairs.size();
      const ad::Var l_cross = cross_sample_loss(pairs, cfg);
      out.record.l_cross = l_cross.item();
      terms.push_back(ad::scale(l_cross, ratios.beta));
    }
  }

  if (terms.empty()) {
    out.total = ad::Var::scalar(0.0);
  } else {
    out.total = terms.front();
    for (std::size_t t = 1; t < terms.size(); ++t) out.total = out.total + terms[t];
  }
  out.record.total = out.total.item();
  return out;
}

StepRecord apply(BatchObjective obj, CharacterModel& model, AdamOptimizer& optimizer) {
  auto& params = model.parameters();
  params.zero_grad();
  if (obj.total.requires_grad()) {
    obj.total.backward();
    optimizer.step(params);
  }
  obj.record.learning_rate = optimizer.config().learning_rate;
  return obj.record;
}

}  // namespace

BatchObjective stage_one_objective(const Batch& batch, const CharacterModel& model, const TaskRatios& ratios,
                                   const ContrastiveConfig& cfg, std::mt19937_64& rng) {
  ratios.validate();
  cfg.validate();
  return objective(batch, model, ratios, cfg, &rng, 1);
}

BatchObjective stage_two_objective(const Batch& batch, const CharacterModel& model) {
  return objective(batch, model, TaskRatios{1.0, 0.0, 0.0}, ContrastiveConfig{}, nullptr, 2);
}

StepRecord stage_one_step(const Batch& batch, CharacterModel& model, AdamOptimizer& optimizer,
                          const TaskRatios& ratios, const ContrastiveConfig& cfg, std::mt19937_64& rng) {
  return apply(stage_one_objective(batch, model, ratios, cfg, rng), model, optimizer);
}

StepRecord stage_two_step(const Batch& batch, CharacterModel& model, AdamOptimizer& optimizer) {
  return apply(stage_two_objective(batch, model), model, optimizer);
}

namespace {

json prf_json(const PRF& p) { return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}}; }

json report_json(const EvalReport& r) {
  json j = {{"items", r.items},
            {"micro", prf_json(r.classification.micro)},
            {"macro", prf_json(r.classification.macro)}};
  if (r.coreference) {
    j["b3"] = prf_json(r.coreference->b_cubed);
    j["ceaf_phi4"] = prf_json(r.coreference->ceaf_phi4);
    j["blanc"] = prf_json(r.coreference->blanc);
    j["conll_avg"] = r.coreference->conll_avg;
  }
  return j;
}

class RunFiles {
 public:
  explicit RunFiles(const TrainConfig& cfg) : dir_(cfg.output_dir) {
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_);
    std::ofstream(dir_ / "config.json") << train_config_to_json(cfg) << '\n';
    if (cfg.log_steps) log_.open(dir_ / "train_log.jsonl", std::ios::trunc);
    history_.open(dir_ / "metrics_history.jsonl", std::ios::trunc);
    if (!history_) throw CheckpointWriteFailure("cannot write into " + dir_.string());
  }
  bool enabled() const { return !dir_.empty(); }
  void step(const StepRecord& r) {
    if (log_.is_open()) log_ << to_json_line(r) << '\n';
  }
  void epoch(const EpochRecord& r) {
    if (!enabled()) return;
    history_ << to_json_line(r) << '\n';
    history_.flush();
    if (log_.is_open()) log_ << to_json_line(r) << '\n';
  }
  void checkpoint(const std::string& name, const CharacterModel& model, const AdamOptimizer* opt) {
    if (enabled()) save_checkpoint(dir_ / name, model, opt);
  }
  void test(const EvalReport& r) {
    if (enabled()) std::ofstream(dir_ / "test_metrics.json") << to_json(r, true) << '\n';
  }

 private:
  std::filesystem::path dir_;
  std::ofstream log_;
  std::ofstream history_;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const StepObserver& observer) {
  cfg.validate();
  const Task task = cfg.task();
  if (make_batches(corpus, Split::kTrain, task, 1, nullptr).empty()) {
    throw InvalidConfig("corpus has no labelled training scenes for task " + std::string(to_string(task)));
  }
  if (corpus.scenes_in(Split::kDev).empty()) throw InvalidConfig("corpus has no dev split");

  auto model = std::make_unique<CharacterModel>(cfg.model, corpus.registry, build_vocabulary(corpus), cfg.seed);
  std::seed_seq shuffle_seed{cfg.seed, std::uint64_t{1}};
  std::seed_seq pair_seed{cfg.seed, std::uint64_t{2}};
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::mt19937_64 pair_rng(pair_seed);
  RunFiles files(cfg);

  TrainResult result;
  int global_step = 0;
  std::optional<AdamOptimizer> last_optimizer;
  for (int stage : {1, 2}) {
    const StageConfig& sc = stage == 1 ? cfg.stage1 : cfg.stage2;
    AdamOptimizer optimizer(AdamConfig{sc.learning_rate});
    for (int epoch = 1; epoch <= sc.epochs; ++epoch) {
      double loss_sum = 0.0;
      const auto batches = make_batches(corpus, Split::kTrain, task, sc.batch_size, &shuffle_rng);
      for (const auto& batch : batches) {
        StepRecord r = stage == 1 ? stage_one_step(batch, *model, optimizer, cfg.ratios, cfg.contrastive, pair_rng)
                                  : stage_two_step(batch, *model, optimizer);
        r.epoch = epoch;
        r.step = ++global_step;
        loss_sum += r.total;
        files.step(r);
        if (observer) observer(r);
      }
      EpochRecord rec;
      rec.stage = stage;
      rec.epoch = epoch;
      rec.mean_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
      rec.dev = evaluate(*model, corpus, Split::kDev);
      if (rec.dev.classification.micro.f1 > result.best_dev_micro_f1) {
        result.best_dev_micro_f1 = rec.dev.classification.micro.f1;
        result.best_model = model->clone();
        rec.best = true;
        files.checkpoint("best.ckpt", *model, &optimizer);
      }
      files.epoch(rec);
      result.history.push_back(rec);
    }
    last_optimizer = optimizer;
  }
  files.checkpoint("last.ckpt", *model, last_optimizer ? &*last_optimizer : nullptr);
  if (!result.best_model) result.best_model = model->clone();
  if (!corpus.scenes_in(Split::kTest).empty()) {
    result.test = evaluate(*result.best_model, corpus, Split::kTest);
    files.test(*result.test);
  }
  result.final_model = std::move(model);
  return result;
}

std::string to_json_line(const StepRecord& r) {
  json j = {{"kind", "step"}, {"stage", r.stage}, {"epoch", r.epoch}, {"step", r.step},
            {"l_sup", r.l_sup}};
  if (r.l_sum) {
    j["l_sum"] = *r.l_sum;
    j["sum_pairs"] = r.sum_pairs;
    j["samples_without_sum_pairs"] = r.samples_without_sum_pairs;
  }
  if (r.l_cross) {
    j["l_cross"] = *r.l_cross;
    j["cross_pairs"] = r.cross_pairs;
    j["cross_pairs_missing"] = r.cross_pairs_missing;
  }
  j["total"] = r.total;
  j["lr"] = r.learning_rate;
  return j.dump();
}

std::string to_json_line(const EpochRecord& r) {
  json j = {{"kind", "epoch"}, {"stage", r.stage}, {"epoch", r.epoch},
            {"mean_loss", r.mean_loss}, {"best", r.best}, {"dev", report_json(r.dev)}};
  return j.dump();
}

std::string to_json(const EvalReport& report, bool pretty) {
  return pretty ? report_json(report).dump(2) : report_json(report).dump();
}

}  // namespace scriptcl
