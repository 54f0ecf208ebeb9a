#include "corpgnn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "corpgnn/error.hpp"

namespace corpgnn {

nlohmann::ordered_json Checkpoint::to_json() const {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["model_config"] = model.to_json();
  j["train_config"] = train.to_json();
  j["data_config"] = data.to_json();
  j["mapping_config"] = mapping.to_json();
  j["standardization"] = standardization_to_json(stats);
  if (shared_graph) {
    j["shared_graph"] = nlohmann::ordered_json::parse(export_graph(*shared_graph, GraphFormat::kEdgeJson));
  } else {
    j["shared_graph"] = nullptr;
  }
  j["best_epoch"] = best_epoch;
  j["params"] = params.to_json();
  return j;
}

Checkpoint Checkpoint::from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object() || !j.contains("format_version")) {
    throw Error(ErrorCode::kCorruptCheckpoint, "missing format_version");
  }
  const auto version = j.at("format_version");
  if (!version.is_number_integer() || version.get<int>() != kCheckpointFormatVersion) {
    throw Error(ErrorCode::kFormatVersionMismatch,
                "expected " + std::to_string(kCheckpointFormatVersion) + ", found " + version.dump());
  }
  try {
    Checkpoint c;
    c.model = ModelConfig::from_json(j.at("model_config"));
    c.train = TrainConfig::from_json(j.at("train_config"));
    c.data = DataConfig::from_json(j.at("data_config"));
    c.mapping = MappingConfig::from_json(j.at("mapping_config"));
    c.stats = standardization_from_json(j.at("standardization"));
    if (!j.at("shared_graph").is_null()) c.shared_graph = parse_edge_json(j.at("shared_graph").dump());
    c.best_epoch = j.value("best_epoch", -1);
    c.params = ParameterStore::from_json(j.at("params"));
    // Shapes must match what the config would initialize.
    const ParameterStore expected = init_params(c.model);
    if (expected.entries().size() != c.params.entries().size()) {
      throw Error(ErrorCode::kCorruptCheckpoint, "parameter count does not match model config");
    }
    for (const auto& e : expected.entries()) {
      if (!c.params.contains(e.name) || !c.params.value(e.name).same_shape(e.value)) {
        throw Error(ErrorCode::kCorruptCheckpoint, "parameter " + e.name + " missing or misshapen");
      }
    }
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kCorruptCheckpoint, ex.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptCheckpoint) throw;
    throw Error(ErrorCode::kCorruptCheckpoint, e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << ckpt.to_json().dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(buf.str());
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kCorruptCheckpoint, ex.what());
  }
  return Checkpoint::from_json(j);
}

}  // namespace corpgnn
