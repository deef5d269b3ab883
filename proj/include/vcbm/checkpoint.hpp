#pragma once

#include <fstream>
#include <map>
#include <string>
#include <utility>

#include <json.hpp>

#include "vcbm/errors.hpp"
#include "vcbm/tensor.hpp"
#include "vcbm/version.hpp"

namespace vcbm {

// Ordered map so serialization order (and therefore the bytes on disk) is
// deterministic for a given parameter set.
using ParamMap = std::map<std::string, Tensor>;

struct Checkpoint {
  ParamMap params;
  nlohmann::json extra;  // epoch, optimizer state, config echo, ...
};

inline nlohmann::json params_to_json(const ParamMap& params) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, tensor] : params) {
    nlohmann::json entry;
    entry["shape"] = tensor.shape();
    entry["data"] = tensor.data();
    out[name] = std::move(entry);
  }
  return out;
}

inline ParamMap params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw data_error("checkpoint: params is not an object");
  ParamMap out;
  for (const auto& [name, entry] : j.items()) {
    if (!entry.contains("shape") || !entry.contains("data")) {
      throw data_error("checkpoint: param '" + name + "' missing shape or data");
    }
    Shape shape = entry.at("shape").get<Shape>();
    std::vector<double> data = entry.at("data").get<std::vector<double>>();
    if (shape_numel(shape) != data.size()) {
      throw data_error("checkpoint: param '" + name + "' shape " +
                       shape_str(shape) + " does not match " +
                       std::to_string(data.size()) + " values");
    }
    out.emplace(name, Tensor::from(std::move(shape), std::move(data)));
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const ParamMap& params,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json doc;
  doc["format"] = "vcbm-checkpoint";
  doc["version"] = kCheckpointFormatVersion;
  doc["extra"] = extra;
  doc["params"] = params_to_json(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("checkpoint: cannot open '" + path + "' for writing");
  out << doc.dump(1) << '\n';
  if (!out) throw data_error("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("checkpoint: cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("checkpoint: parse error in '" + path + "': " + e.what());
  }
  if (doc.value("format", "") != "vcbm-checkpoint") {
    throw data_error("checkpoint: '" + path + "' is not a vcbm checkpoint");
  }
  if (doc.value("version", -1) != kCheckpointFormatVersion) {
    throw data_error("checkpoint: unsupported version in '" + path + "'");
  }
  Checkpoint ck;
  ck.extra = doc.value("extra", nlohmann::json::object());
  ck.params = params_from_json(doc.at("params"));
  return ck;
}

}  // namespace vcbm
