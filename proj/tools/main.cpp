#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "scriptcl/error.hpp"

namespace {

using scriptcl::InvalidInput;

// Turns leftover "--key value" / "--key=value" arguments into config overrides.
std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& extras) {
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() == 2) throw InvalidInput("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2);
    if (auto eq = key.find('='); eq != std::string::npos) {
      out[key.substr(0, eq)] = key.substr(eq + 1);
      continue;
    }
    if (i + 1 >= extras.size()) throw InvalidInput("override '" + arg + "' has no value");
    out[key] = extras[++i];
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = scriptcl::cli;
  CLI::App app{"Character representation learning on dialogue scripts"};
  app.require_subcommand(1);

  cli::TrainArgs train;
  std::string train_config, train_corpus, train_out, train_task;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "two-stage training; extra --key value pairs override config keys");
  t->add_option("--config", train_config, "JSON config file");
  auto* t_corpus = t->add_option("--corpus", train_corpus, "corpus directory");
  auto* t_out = t->add_option("--out", train_out, "output directory");
  auto* t_seed = t->add_option("--seed", train_seed, "random seed");
  auto* t_task = t->add_option("--task", train_task, "linking or guessing");
  t->allow_extras();

  cli::PredictArgs predict;
  auto* p = app.add_subcommand("predict", "write model predictions for a split");
  p->add_option("--checkpoint", predict.checkpoint)->required();
  p->add_option("--corpus", predict.corpus)->required();
  p->add_option("--split", predict.split)->capture_default_str();
  p->add_option("--out", predict.out, "prediction file")->required();
  p->add_option("--clusters", predict.clusters, "also write derived clusters (linking)");
  p->add_option("--gold", predict.gold, "also write gold labels for the split");
  p->add_option("--gold-clusters", predict.gold_clusters, "also write gold clusters (linking)");

  cli::ScoreArgs score;
  auto* s = app.add_subcommand("score", "score a prediction or clustering file against gold");
  s->add_option("--gold", score.gold)->required();
  s->add_option("--pred", score.pred)->required();
  s->add_option("--task", score.task, "coref, linking or guessing")->capture_default_str();
  s->add_option("--registry", score.registry, "registry file (linking, guessing)");
  s->add_option("--out", score.out, "JSON report");

  cli::ExportArgs exp;
  auto* e = app.add_subcommand("export-embeddings", "dump sampled character embeddings as TSV");
  e->add_option("--checkpoint", exp.checkpoint)->required();
  e->add_option("--corpus", exp.corpus)->required();
  e->add_option("--split", exp.split)->capture_default_str();
  e->add_option("--per-character", exp.per_character)->capture_default_str();
  e->add_option("--seed", exp.seed)->capture_default_str();
  e->add_flag("--include-summary", exp.include_summary, "also sample summary-side embeddings");
  e->add_option("--out", exp.out)->required();

  cli::EvidenceArgs ev;
  auto* b = app.add_subcommand("evidence-breakdown", "guessing accuracy per merged evidence bucket");
  b->add_option("--pred", ev.pred)->required();
  b->add_option("--gold", ev.gold)->required();
  b->add_option("--annotations", ev.annotations)->required();
  b->add_option("--out", ev.out, "JSON report");

  cli::SyntheticArgs syn;
  auto* g = app.add_subcommand("gen-synthetic", "generate a synthetic corpus");
  g->add_option("--out", syn.out, "output directory")->required();
  g->add_option("--seed", syn.seed)->capture_default_str();
  g->add_option("--format", syn.format, "guessing or linking")->capture_default_str();
  g->add_option("--characters", syn.spec.n_characters)->capture_default_str();
  g->add_option("--scenes", syn.spec.n_scenes)->capture_default_str();
  g->add_option("--utterances", syn.spec.utterances_per_scene)->capture_default_str();
  g->add_option("--vocab-skew", syn.spec.vocab_skew)->capture_default_str();
  g->add_option("--tokens", syn.spec.tokens_per_utterance)->capture_default_str();
  g->add_option("--summary-tokens", syn.spec.summary_signature_tokens, "signature tokens per summary mention")
      ->capture_default_str();
  g->add_option("--signature-vocab", syn.spec.signature_vocab)->capture_default_str();
  g->add_option("--shared-vocab", syn.spec.shared_vocab)->capture_default_str();
  g->add_option("--max-speakers", syn.spec.max_speakers_per_scene)->capture_default_str();
  g->add_option("--address-rate", syn.spec.address_rate)->capture_default_str();
  g->add_option("--dev-fraction", syn.spec.dev_fraction)->capture_default_str();
  g->add_option("--test-fraction", syn.spec.test_fraction)->capture_default_str();

  cli::CorpusArgs val;
  auto* v = app.add_subcommand("validate", "report every problem in a corpus");
  v->add_option("--corpus", val.corpus)->required();
  v->add_option("--format", val.format)->capture_default_str();

  cli::CorpusArgs st;
  auto* c = app.add_subcommand("stats", "corpus statistics");
  c->add_option("--corpus", st.corpus)->required();
  c->add_option("--format", st.format)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (t->parsed()) {
      train.config = train_config;
      if (*t_corpus) train.corpus = train_corpus;
      if (*t_out) train.out = train_out;
      if (*t_seed) train.seed = train_seed;
      if (*t_task) train.task = train_task;
      train.overrides = parse_overrides(t->remaining());
      return cli::run_train(train);
    }
    if (p->parsed()) return cli::run_predict(predict);
    if (s->parsed()) return cli::run_score(score);
    if (e->parsed()) return cli::run_export(exp);
    if (b->parsed()) return cli::run_evidence(ev);
    if (g->parsed()) return cli::run_gen_synthetic(syn);
    if (v->parsed()) return cli::run_validate(val);
    if (c->parsed()) return cli::run_stats(st);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
