#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "scriptcl/model.hpp"
#include "scriptcl/objectives.hpp"
#include "scriptcl/optimizer.hpp"

namespace scriptcl {

// Weights of the supervised, summary-conversation and cross-sample terms in
// the first-stage objective.
struct TaskRatios {
  double lambda = 1.0;
  double alpha = 0.5;
  double beta = 0.5;
  void validate() const;  // NoActiveLoss when all three are zero
};

struct StageConfig {
  double learning_rate = 1e-3;
  int batch_size = 4;
  int epochs = 10;
  void validate(const std::string& stage) const;
};

struct TrainConfig {
  ModelConfig model;
  StageConfig stage1;
  StageConfig stage2;
  TaskRatios ratios;
  ContrastiveConfig contrastive;
  std::uint64_t seed = 7;
  std::filesystem::path corpus;       // directory with registry.txt + corpus.jsonl
  std::filesystem::path output_dir;   // empty: keep everything in memory
  bool log_steps = true;

  Task task() const { return model.task; }
  void validate() const;
};

// Config documents are JSON objects; `overrides` maps dotted keys
// ("stage1.learning_rate") to values parsed as JSON when possible and as
// strings otherwise. Unknown keys are rejected.
TrainConfig parse_train_config(const std::string& json_text,
                               const std::map<std::string, std::string>& overrides = {});
TrainConfig load_train_config(const std::filesystem::path& path,
                              const std::map<std::string, std::string>& overrides = {});
std::string train_config_to_json(const TrainConfig& cfg);

// Samples of one optimisation step; sample_index is the position in the batch.
struct Batch {
  std::vector<AlignedSample> samples;
};

// Groups the split's scenes that carry task items (mentions or slots) into
// batches, shuffled by `rng` when given.
std::vector<Batch> make_batches(const Corpus& corpus, Split split, Task task, int batch_size,
                                std::mt19937_64* rng);

struct StepRecord {
  int stage = 1;
  int epoch = 0;
  int step = 0;
  double total = 0.0;
  double l_sup = 0.0;
  // Present in stage 1 only. A term with zero weight or no pairs logs 0.
  std::optional<double> l_sum;
  std::optional<double> l_cross;
  std::size_t sum_pairs = 0;         // P summed over the batch
  std::size_t cross_pairs = 0;       // K
  std::size_t samples_without_sum_pairs = 0;
  bool cross_pairs_missing = false;
  double learning_rate = 0.0;
};

struct BatchObjective {
  ad::Var total;
  StepRecord record;
};

// λ·L_Sup + α·L_Sum + β·L_Cross over the batch. L_Sup is the mean over all
// labelled items; L_Sum is averaged over samples that have P >= 1; L_Cross
// is computed once over the pooled conversation-side embeddings. Terms with
// zero weight are not evaluated.
BatchObjective stage_one_objective(const Batch& batch, const CharacterModel& model, const TaskRatios& ratios,
                                   const ContrastiveConfig& cfg, std::mt19937_64& rng);
BatchObjective stage_two_objective(const Batch& batch, const CharacterModel& model);

// Objective + backward + one Adam update.
StepRecord stage_one_step(const Batch& batch, CharacterModel& model, AdamOptimizer& optimizer,
                          const TaskRatios& ratios, const ContrastiveConfig& cfg, std::mt19937_64& rng);
StepRecord stage_two_step(const Batch& batch, CharacterModel& model, AdamOptimizer& optimizer);

struct EpochRecord {
  int stage = 1;
  int epoch = 0;
  double mean_loss = 0.0;
  EvalReport dev;
  bool best = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::unique_ptr<CharacterModel> best_model;   // highest dev micro-F1
  std::unique_ptr<CharacterModel> final_model;
  double best_dev_micro_f1 = -1.0;
  std::optional<EvalReport> test;               // best model on the test split
};

// Optional per-step observer (used by tests and the CLI log writer).
using StepObserver = std::function<void(const StepRecord&)>;

// Stage 1 for stage1.epochs, then stage 2 for stage2.epochs, evaluating on
// dev after every epoch. With an output_dir, writes best.ckpt, last.ckpt,
// train_log.jsonl, metrics_history.jsonl and config.json there.
TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const StepObserver& observer = {});

std::string to_json_line(const StepRecord& record);
std::string to_json_line(const EpochRecord& record);
std::string to_json(const EvalReport& report, bool pretty = false);

}  // namespace scriptcl
