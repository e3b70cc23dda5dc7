#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "scriptcl/model.hpp"
#include "scriptcl/optimizer.hpp"

namespace scriptcl {

// Single-file archive:
//   8 bytes   magic "SCLCKPT1"
//   8 bytes   little-endian uint64 length N of the JSON header
//   N bytes   JSON header {"metadata": {...}, "tensors": [{name, rows, cols, offset}]}
//   payload   float64 little-endian, each tensor row-major at its offset
// Metadata records the model configuration, vocabulary and registry. Adam
// moments, when present, are stored as "optimizer.m/<name>" and
// "optimizer.v/<name>" tensors.
void save_checkpoint(const std::filesystem::path& path, const CharacterModel& model,
                     const AdamOptimizer* optimizer = nullptr);

struct LoadedCheckpoint {
  std::unique_ptr<CharacterModel> model;
  std::optional<AdamOptimizer> optimizer;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Throws IncompatibleCheckpoint unless the registries agree.
void require_compatible(const CharacterModel& model, const CharacterRegistry& registry);

}  // namespace scriptcl
