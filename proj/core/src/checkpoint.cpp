#include "scriptcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "scriptcl/error.hpp"

namespace scriptcl {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'C', 'L', 'C', 'K', 'P', 'T', '1'};

json model_metadata(const CharacterModel& model) {
  const auto& c = model.config();
  return {
      {"task", std::string(to_string(c.task))},
      {"hidden_size", c.encoder.hidden_size},
      {"max_length", c.encoder.max_length},
      {"encoder_heads", c.encoder.attention.n_heads},
      {"encoder_ffn", c.encoder.attention.ffn_width},
      {"mlsa_blocks", c.mlsa.n_blocks},
      {"mlsa_heads", c.mlsa.attention.n_heads},
      {"mlsa_ffn", c.mlsa.attention.ffn_width},
      {"head_hidden", c.head.hidden_width},
      {"share_mlsa", c.share_mlsa},
      {"vocab", model.encoder().vocabulary().tokens()},
      {"registry", model.registry().names()},
  };
}

ModelConfig config_from(const json& m) {
  ModelConfig c;
  auto task = parse_task(m.at("task").get<std::string>());
  if (!task) throw IncompatibleCheckpoint("unknown task in checkpoint");
  c.task = *task;
  c.encoder.hidden_size = m.at("hidden_size").get<int>();
  c.encoder.max_length = m.at("max_length").get<int>();
  c.encoder.attention.n_heads = m.at("encoder_heads").get<int>();
  c.encoder.attention.ffn_width = m.at("encoder_ffn").get<int>();
  c.mlsa.n_blocks = m.at("mlsa_blocks").get<int>();
  c.mlsa.attention.n_heads = m.at("mlsa_heads").get<int>();
  c.mlsa.attention.ffn_width = m.at("mlsa_ffn").get<int>();
  c.head.hidden_width = m.at("head_hidden").get<int>();
  c.share_mlsa = m.at("share_mlsa").get<bool>();
  return c;
}

struct Tensor {
  std::string name;
  const ad::Matrix* value;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CharacterModel& model,
                     const AdamOptimizer* optimizer) {
  std::vector<Tensor> tensors;
  for (const auto& name : model.parameters().names()) tensors.push_back({name, &model.parameters().get(name).value()});
  json metadata = model_metadata(model);
  if (optimizer) {
    const auto& cfg = optimizer->config();
    metadata["optimizer"] = {{"type", "adam"},         {"steps", optimizer->steps()},
                             {"learning_rate", cfg.learning_rate}, {"beta1", cfg.beta1},
                             {"beta2", cfg.beta2},       {"epsilon", cfg.epsilon}};
    for (const auto& [name, mom] : optimizer->moments()) {
      tensors.push_back({"optimizer.m/" + name, &mom.first});
      tensors.push_back({"optimizer.v/" + name, &mom.second});
    }
  }
  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    manifest.push_back({{"name", t.name}, {"rows", t.value->rows()}, {"cols", t.value->cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.value->size()) * sizeof(double);
  }
  const std::string header = json{{"metadata", metadata}, {"tensors", manifest}}.dump();

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw CheckpointWriteFailure("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointWriteFailure("cannot open " + tmp.string());
    const std::uint64_t n = header.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& t : tensors) {
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = *t.value;
      out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
    }
    if (!out) throw CheckpointWriteFailure("write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointWriteFailure("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IncompatibleCheckpoint("cannot open " + path.string());
  char magic[8];
  std::uint64_t n = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IncompatibleCheckpoint(path.string() + " is not a checkpoint archive");
  }
  std::string header(n, '\0');
  in.read(header.data(), static_cast<std::streamsize>(n));
  const auto payload_start = in.tellg();
  json doc;
  try {
    doc = json::parse(header);
  } catch (const json::exception& e) {
    throw IncompatibleCheckpoint(std::string("unreadable checkpoint header: ") + e.what());
  }

  LoadedCheckpoint loaded;
  std::map<std::string, ad::Matrix> tensors;
  try {
    const auto& meta = doc.at("metadata");
    const ModelConfig cfg = config_from(meta);
    CharacterRegistry registry(meta.at("registry").get<std::vector<std::string>>());
    const auto vocab_tokens = meta.at("vocab").get<std::vector<std::string>>();
    // The first two entries are the reserved unknown/separator tokens.
    Vocabulary vocab(std::vector<std::string>(vocab_tokens.begin() + std::min<std::size_t>(2, vocab_tokens.size()),
                                              vocab_tokens.end()));
    if (vocab.tokens() != vocab_tokens) throw IncompatibleCheckpoint("vocabulary layout differs");
    loaded.model = std::make_unique<CharacterModel>(cfg, std::move(registry), std::move(vocab), 0);

    for (const auto& t : doc.at("tensors")) {
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
      in.seekg(payload_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
      in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
      if (!in) throw IncompatibleCheckpoint("truncated tensor '" + t.at("name").get<std::string>() + "'");
      tensors[t.at("name").get<std::string>()] = rm;
    }
    auto& params = loaded.model->parameters();
    for (const auto& name : params.names()) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw IncompatibleCheckpoint("missing tensor '" + name + "'");
      auto& dst = params.get(name).mutable_value();
      if (dst.rows() != it->second.rows() || dst.cols() != it->second.cols()) {
        throw IncompatibleCheckpoint("tensor '" + name + "' has the wrong shape");
      }
      dst = it->second;
    }
    if (meta.contains("optimizer")) {
      const auto& o = meta.at("optimizer");
      AdamConfig cfg_opt{o.at("learning_rate").get<double>(), o.at("beta1").get<double>(),
                         o.at("beta2").get<double>(), o.at("epsilon").get<double>()};
      std::map<std::string, AdamOptimizer::Moments> moments;
      for (const auto& name : params.names()) {
        auto m = tensors.find("optimizer.m/" + name);
        auto v = tensors.find("optimizer.v/" + name);
        if (m != tensors.end() && v != tensors.end()) moments[name] = {m->second, v->second};
      }
      loaded.optimizer.emplace(cfg_opt);
      loaded.optimizer->restore(o.at("steps").get<long long>(), std::move(moments));
    }
  } catch (const json::exception& e) {
    throw IncompatibleCheckpoint(std::string("malformed checkpoint metadata: ") + e.what());
  } catch (const InvalidConfig& e) {
    throw IncompatibleCheckpoint(e.what());
  } catch (const InvalidSpec& e) {
    throw IncompatibleCheckpoint(e.what());
  }
  return loaded;
}

void require_compatible(const CharacterModel& model, const CharacterRegistry& registry) {
  if (!(model.registry() == registry)) {
    throw IncompatibleCheckpoint("checkpoint registry differs from the corpus registry");
  }
}

}  // namespace scriptcl
