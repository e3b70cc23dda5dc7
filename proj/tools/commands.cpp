#include "commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "scriptcl/checkpoint.hpp"
#include "scriptcl/error.hpp"
#include "scriptcl/reporting.hpp"
#include "scriptcl/trainer.hpp"

namespace scriptcl::cli {

namespace fs = std::filesystem;

fs::path resolve_data_path(const fs::path& path) {
  if (path.empty() || path.is_absolute() || fs::exists(path)) return path;
  if (const char* root = std::getenv("SCRIPTCL_DATA_ROOT"); root && *root) {
    const fs::path candidate = fs::path(root) / path;
    if (fs::exists(candidate)) return candidate;
  }
  return path;
}

namespace {

Split split_arg(const std::string& text) {
  auto s = parse_split(text);
  if (!s) throw InvalidInput("unknown split '" + text + "'");
  return *s;
}

CorpusFormat format_arg(const std::string& text) {
  auto f = parse_format(text);
  if (!f) throw InvalidInput("unknown corpus format '" + text + "'");
  return *f;
}

CorpusFormat format_for(Task task) {
  return task == Task::kLinking ? CorpusFormat::kLinkingCoref : CorpusFormat::kGuessing;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void emit(const std::string& json_text, const std::string& table, const std::optional<fs::path>& out) {
  std::cout << table;
  if (out) open_out(*out) << json_text << '\n';
}

LoadedCheckpoint load_for(const fs::path& checkpoint, const Corpus& corpus) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  require_compatible(*loaded.model, corpus.registry);
  return loaded;
}

Corpus corpus_for_checkpoint(const fs::path& checkpoint, const fs::path& dir) {
  // The corpus format follows the task stored in the checkpoint.
  const LoadedCheckpoint probe = load_checkpoint(checkpoint);
  return load_corpus(resolve_data_path(dir), format_for(probe.model->config().task));
}

}  // namespace

int run_train(const TrainArgs& args) {
  auto overrides = args.overrides;
  if (args.corpus) overrides["corpus"] = args.corpus->string();
  if (args.out) overrides["output_dir"] = args.out->string();
  if (args.seed) overrides["seed"] = std::to_string(*args.seed);
  if (args.task) overrides["task"] = *args.task;
  TrainConfig cfg = args.config.empty() ? parse_train_config("{}", overrides)
                                        : load_train_config(resolve_data_path(args.config), overrides);
  if (cfg.corpus.empty()) throw InvalidConfig("no corpus given (set 'corpus' or pass --corpus)");
  if (cfg.output_dir.empty()) throw InvalidConfig("no output directory given (set 'output_dir' or pass --out)");
  cfg.corpus = resolve_data_path(cfg.corpus);
  const Corpus corpus = load_corpus(cfg.corpus, format_for(cfg.task()));

  const TrainResult result = train(cfg, corpus);
  for (const auto& e : result.history) {
    std::cout << "stage " << e.stage << " epoch " << e.epoch << "  loss " << e.mean_loss << "  dev micro-F1 "
              << e.dev.classification.micro.f1 << (e.best ? "  *" : "") << '\n';
  }
  std::cout << "best dev micro-F1 " << result.best_dev_micro_f1 << '\n';
  if (result.test) std::cout << "test (best model)\n" << render_table(result.test->classification);
  return 0;
}

int run_predict(const PredictArgs& args) {
  const Corpus corpus = corpus_for_checkpoint(args.checkpoint, args.corpus);
  const LoadedCheckpoint loaded = load_for(args.checkpoint, corpus);
  const Split split = split_arg(args.split);
  auto out = open_out(args.out);
  write_predictions(out, predict_split(*loaded.model, corpus, split));
  if (args.clusters) {
    if (loaded.model->config().task != Task::kLinking) throw InvalidInput("clusters need a linking checkpoint");
    auto c = open_out(*args.clusters);
    write_clusterings(c, predicted_clusterings(*loaded.model, corpus, split));
  }
  if (args.gold) {
    auto g = open_out(*args.gold);
    write_predictions(g, gold_rows(corpus, loaded.model->config().task, split));
  }
  if (args.gold_clusters) {
    if (loaded.model->config().task != Task::kLinking) throw InvalidInput("clusters need a linking checkpoint");
    auto g = open_out(*args.gold_clusters);
    write_clusterings(g, gold_clusterings(corpus, split));
  }
  return 0;
}

int run_score(const ScoreArgs& args) {
  if (args.task == "coref") {
    const CorefReport report = score_clusterings(read_clusterings(args.gold), read_clusterings(args.pred));
    emit(report_json(report), render_table(report), args.out);
    return 0;
  }
  if (!parse_task(args.task)) throw InvalidInput("unknown task '" + args.task + "'");
  if (!args.registry) throw InvalidInput("--registry is required to score " + args.task + " predictions");
  const CharacterRegistry registry = load_registry(resolve_data_path(*args.registry));
  const ClassificationReport report =
      score_predictions(read_predictions(args.gold), read_predictions(args.pred), registry);
  emit(report_json(report), render_table(report), args.out);
  return 0;
}

int run_export(const ExportArgs& args) {
  const Corpus corpus = corpus_for_checkpoint(args.checkpoint, args.corpus);
  const LoadedCheckpoint loaded = load_for(args.checkpoint, corpus);
  ExportOptions options;
  options.split = split_arg(args.split);
  options.per_character = args.per_character;
  options.seed = args.seed;
  options.include_summary = args.include_summary;
  const EmbeddingExport data = export_embeddings(*loaded.model, corpus, options);
  for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
  auto out = open_out(args.out);
  write_embedding_table(out, data, corpus.registry);
  std::cout << data.rows.size() << " embeddings written to " << args.out.string() << '\n';
  return 0;
}

int run_evidence(const EvidenceArgs& args) {
  const EvidenceReport report =
      evidence_breakdown(read_predictions(args.gold), read_predictions(args.pred), read_evidence(args.annotations));
  emit(report_json(report), render_table(report), args.out);
  return 0;
}

int run_gen_synthetic(const SyntheticArgs& args) {
  SyntheticSpec spec = args.spec;
  spec.format = format_arg(args.format);
  const Corpus corpus = generate_synthetic_corpus(spec, args.seed);
  write_corpus(args.out, corpus);
  const CorpusStats stats = corpus_stats(corpus);
  std::cout << stats.total.scenes << " scenes, " << corpus.summaries.size() << " summaries written to "
            << args.out.string() << '\n';
  return 0;
}

int run_validate(const CorpusArgs& args) {
  const fs::path dir = resolve_data_path(args.corpus);
  const CharacterRegistry registry = load_registry(dir / "registry.txt");
  std::ifstream in(dir / "corpus.jsonl");
  if (!in) throw IoError("cannot open " + (dir / "corpus.jsonl").string());
  const auto diagnostics = validate_corpus(in, registry, format_arg(args.format));
  for (const auto& d : diagnostics) std::cout << "line " << d.line << ": " << d.kind << ": " << d.message << '\n';
  std::cout << diagnostics.size() << " problem(s)\n";
  return diagnostics.empty() ? 0 : 1;
}

int run_stats(const CorpusArgs& args) {
  const Corpus corpus = load_corpus(resolve_data_path(args.corpus), format_arg(args.format));
  const CorpusStats stats = corpus_stats(corpus);
  std::printf("%-6s %7s %10s %9s %6s %10s\n", "split", "scenes", "utterances", "mentions", "slots", "summaries");
  auto row = [](std::string_view name, const SplitStats& s) {
    std::printf("%-6.*s %7zu %10zu %9zu %6zu %10zu\n", static_cast<int>(name.size()), name.data(), s.scenes,
                s.utterances, s.mentions, s.slots, s.summaries);
  };
  for (const auto& [split, s] : stats.splits) row(to_string(split), s);
  row("total", stats.total);
  std::cout << '\n';
  for (std::size_t c = 0; c < stats.character_frequency.size(); ++c) {
    std::cout << corpus.registry.name(static_cast<CharacterId>(c)) << '\t' << stats.character_frequency[c] << '\n';
  }
  return 0;
}

}  // namespace scriptcl::cli
