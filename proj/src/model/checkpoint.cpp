#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "common/error.hpp"
#include "model/model.hpp"

namespace dvqa::model {

namespace {
constexpr const char* kFormat = "dvqa-checkpoint";
constexpr int kVersion = 1;
}  // namespace

std::string checkpoint_to_string(const Model& model, const std::string& metadata_json) {
  const ModelConfig& c = model.config();
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["config"] = {{"question_vocab", c.question_vocab}, {"image_dim", c.image_dim},
                 {"num_answers", c.num_answers},       {"embed_dim", c.embed_dim},
                 {"hidden_dim", c.hidden_dim},         {"fusion", fusion_name(c.fusion)},
                 {"seed", c.seed}};
  j["metadata"] = nlohmann::json::parse(metadata_json);
  nlohmann::json params = nlohmann::json::array();
  for (const ad::Parameter* p : model.parameters()) {
    params.push_back({{"name", p->name},
                      {"shape", p->value.shape()},
                      {"data", std::vector<double>(p->value.data().begin(), p->value.data().end())}});
  }
  j["parameters"] = std::move(params);
  return j.dump();
}

LoadedCheckpoint checkpoint_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != kFormat) throw DataError("not a dvqa checkpoint");
  if (j.value("version", 0) != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  }
  try {
    const auto& c = j.at("config");
    ModelConfig cfg;
    cfg.question_vocab = c.at("question_vocab").get<std::size_t>();
    cfg.image_dim = c.at("image_dim").get<std::size_t>();
    cfg.num_answers = c.at("num_answers").get<std::size_t>();
    cfg.embed_dim = c.at("embed_dim").get<std::size_t>();
    cfg.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    cfg.fusion = parse_fusion(c.at("fusion").get<std::string>());
    cfg.seed = c.at("seed").get<std::uint64_t>();
    Model model(cfg);
    for (const auto& p : j.at("parameters")) {
      const auto name = p.at("name").get<std::string>();
      ad::Parameter* target = model.find(name);
      if (!target) throw DataError("checkpoint has unknown parameter '" + name + "'");
      ad::Tensor value(p.at("shape").get<std::vector<std::size_t>>(), p.at("data").get<std::vector<double>>());
      if (value.shape() != target->value.shape()) {
        throw DataError("parameter '" + name + "' has shape " + ad::shape_string(value.shape()) + ", expected " +
                        ad::shape_string(target->value.shape()));
      }
      target->value = std::move(value);
    }
    return {std::move(model), j.value("metadata", nlohmann::json::object()).dump()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::string& path, const std::string& metadata_json) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << checkpoint_to_string(model, metadata_json) << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace dvqa::model
