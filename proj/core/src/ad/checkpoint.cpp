#include "swarmloc/ad/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"

namespace swarmloc::ad {

std::string params_to_json(const ParamMap& params) {
  std::string out;
  out += "{\"format\":\"";
  out += kCheckpointFormat;
  out += "\",\"params\":{";
  bool first = true;
  for (const auto& [name, t] : params) {
    if (!first) out += ',';
    first = false;
    out += '"' + name + "\":{\"shape\":[" + std::to_string(t.rows()) + ',' +
           std::to_string(t.cols()) + "],\"data\":[";
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i) out += ',';
      out += format_double(t[i]);
    }
    out += "]}";
  }
  out += "}}\n";
  return out;
}

ParamMap params_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
  if (!j.contains("format") || j["format"] != kCheckpointFormat) {
    throw Error("checkpoint: missing or unsupported format tag");
  }
  ParamMap out;
  for (const auto& [name, entry] : j.at("params").items()) {
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw Error("checkpoint: tensor '" + name + "' is not rank 2");
    out.emplace(name, Tensor(shape[0], shape[1], entry.at("data").get<std::vector<double>>()));
  }
  return out;
}

void save_params(const ParamMap& params, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write checkpoint " + path.string());
  f << params_to_json(params);
}

ParamMap load_params(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return params_from_json(ss.str());
}

}  // namespace swarmloc::ad
