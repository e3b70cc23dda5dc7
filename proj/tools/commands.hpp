#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "scriptcl/script_data.hpp"

namespace scriptcl::cli {

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::filesystem::path> corpus;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task;
  std::map<std::string, std::string> overrides;
};

struct PredictArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::string split = "test";
  std::filesystem::path out;
  std::optional<std::filesystem::path> clusters;
  // Gold counterparts of the two outputs above, for `score`.
  std::optional<std::filesystem::path> gold;
  std::optional<std::filesystem::path> gold_clusters;
};

struct ScoreArgs {
  std::filesystem::path gold;
  std::filesystem::path pred;
  std::string task = "coref";
  std::optional<std::filesystem::path> registry;
  std::optional<std::filesystem::path> out;
};

struct ExportArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::string split = "dev";
  int per_character = 6;
  std::uint64_t seed = 7;
  bool include_summary = false;
  std::filesystem::path out;
};

struct EvidenceArgs {
  std::filesystem::path pred;
  std::filesystem::path gold;
  std::filesystem::path annotations;
  std::optional<std::filesystem::path> out;
};

struct SyntheticArgs {
  SyntheticSpec spec;
  std::string format = "guessing";
  std::uint64_t seed = 7;
  std::filesystem::path out;
};

struct CorpusArgs {
  std::filesystem::path corpus;
  std::string format = "guessing";
};

// Each returns the process exit status.
int run_train(const TrainArgs& args);
int run_predict(const PredictArgs& args);
int run_score(const ScoreArgs& args);
int run_export(const ExportArgs& args);
int run_evidence(const EvidenceArgs& args);
int run_gen_synthetic(const SyntheticArgs& args);
int run_validate(const CorpusArgs& args);
int run_stats(const CorpusArgs& args);

// Relative paths that do not exist are looked up under $SCRIPTCL_DATA_ROOT.
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

}  // namespace scriptcl::cli
