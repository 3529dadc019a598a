#include "swarmloc/matchnet/params.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"

namespace swarmloc::matchnet {
namespace {

const char* const kRoles[] = {"self", "cross"};

std::string layer_key(int l, const char* role, const char* name) {
  return "gnn." + std::to_string(l) + "." + role + "." + name;
}

}  // namespace

void MatchNetConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("matchnet: " + m); };
  if (dim < 1 || layers < 0 || head_hidden < 1) fail("dim/head_hidden must be >= 1, layers >= 0");
  if (max_det < 1) fail("max_det must be >= 1");
  if (sinkhorn_iters < 1) fail("sinkhorn_iters must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) fail("threshold must be in [0, 1]");
  if (!(var_min > 0.0 && var_max > var_min)) fail("variance bounds must satisfy 0 < min < max");
  if (!(var_unmatched > 0.0)) fail("var_unmatched must be positive");
  if (!(pos_scale > 0.0)) fail("pos_scale must be positive");
}

std::map<std::string, std::pair<std::size_t, std::size_t>> param_shapes(const MatchNetConfig& c) {
  const std::size_t d = c.dim;
  const std::size_t h = c.head_hidden;
  const std::size_t f = c.feature_width();
  std::map<std::string, std::pair<std::size_t, std::size_t>> s;
  s["enc.w0"] = {3, d};
  s["enc.b0"] = {1, d};
  s["enc.w1"] = {d, d};
  s["enc.b1"] = {1, d};
  for (int l = 0; l < c.layers; ++l) {
    for (const char* role : kRoles) {
      s[layer_key(l, role, "wq")] = {d, d};
      s[layer_key(l, role, "wk")] = {d, d};
      s[layer_key(l, role, "wv")] = {d, d};
      s[layer_key(l, role, "w0")] = {2 * d, d};
      s[layer_key(l, role, "b0")] = {1, d};
      s[layer_key(l, role, "w1")] = {d, d};
      s[layer_key(l, role, "b1")] = {1, d};
    }
  }
  s["dustbin"] = {1, 1};
  for (const char* head : {"pos", "cov"}) {
    const std::string p = head;
    s[p + ".w0"] = {f, h};
    s[p + ".b0"] = {1, h};
    s[p + ".w1"] = {h, h};
    s[p + ".b1"] = {1, h};
    s[p + ".w2"] = {h, 3};
    s[p + ".b2"] = {1, 3};
  }
  return s;
}

NetworkParams NetworkParams::init(const MatchNetConfig& config, std::uint64_t seed) {
  config.validate();
  NetworkParams p;
  p.config = config;
  std::mt19937_64 rng(seed);
  // std::map iteration order fixes the draw order.
  for (const auto& [name, shape] : param_shapes(config)) {
    ad::Tensor t(shape.first, shape.second, 0.0);
    const bool bias = name.find(".b") != std::string::npos;
    const bool zero_last = name == "pos.w2";
    if (!bias && !zero_last && name != "dustbin") {
      const double fan_in = static_cast<double>(shape.first);
      const double fan_out = static_cast<double>(shape.second);
      std::normal_distribution<double> n(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
      for (double& v : t.data()) v = n(rng);
    }
    if (name == "dustbin") t[0] = 1.0;
    if (name == "cov.b2") t.fill(std::log(0.05));
    p.tensors.emplace(name, std::move(t));
  }
  return p;
}

void NetworkParams::validate() const {
  config.validate();
  const auto shapes = param_shapes(config);
  for (const auto& [name, shape] : shapes) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ShapeError("matchnet params: missing tensor " + name);
    if (it->second.rows() != shape.first || it->second.cols() != shape.second) {
      throw ShapeError("matchnet params: tensor " + name + " has the wrong shape");
    }
    if (!it->second.all_finite()) throw ShapeError("matchnet params: tensor " + name + " is not finite");
  }
  if (tensors.size() != shapes.size()) throw ShapeError("matchnet params: unexpected extra tensors");
}

std::string config_to_json(const MatchNetConfig& c) {
  std::string s = "{\"format\":\"swarmloc-matchnet/1\"";
  auto i = [&](const char* k, int v) { s += std::string(",\"") + k + "\":" + std::to_string(v); };
  auto d = [&](const char* k, double v) { s += std::string(",\"") + k + "\":" + format_double(v); };
  i("dim", c.dim);
  i("layers", c.layers);
  i("max_det", c.max_det);
  i("head_hidden", c.head_hidden);
  i("sinkhorn_iters", c.sinkhorn_iters);
  d("threshold", c.threshold);
  d("var_min", c.var_min);
  d("var_max", c.var_max);
  d("var_unmatched", c.var_unmatched);
  d("pos_scale", c.pos_scale);
  s += "}\n";
  return s;
}

MatchNetConfig config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string()) != "swarmloc-matchnet/1") {
      throw Error("unknown metadata format tag");
    }
    MatchNetConfig c;
    c.dim = j.at("dim").get<int>();
    c.layers = j.at("layers").get<int>();
    c.max_det = j.at("max_det").get<int>();
    c.head_hidden = j.at("head_hidden").get<int>();
    c.sinkhorn_iters = j.at("sinkhorn_iters").get<int>();
    c.threshold = j.at("threshold").get<double>();
    c.var_min = j.at("var_min").get<double>();
    c.var_max = j.at("var_max").get<double>();
    c.var_unmatched = j.at("var_unmatched").get<double>();
    c.pos_scale = j.at("pos_scale").get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("matchnet metadata: ") + e.what());
  }
}

void NetworkParams::save(const std::string& path) const {
  validate();
  ad::save_params(tensors, path);
  std::ofstream meta(path + ".meta.json", std::ios::binary);
  if (!meta) throw Error("cannot write " + path + ".meta.json");
  meta << config_to_json(config);
}

NetworkParams NetworkParams::load(const std::string& path) {
  std::ifstream meta(path + ".meta.json", std::ios::binary);
  if (!meta) throw Error("missing checkpoint metadata " + path + ".meta.json");
  std::stringstream ss;
  ss << meta.rdbuf();
  NetworkParams p;
  p.config = config_from_json(ss.str());
  p.tensors = ad::load_params(path);
  p.validate();
  return p;
}

std::uint64_t NetworkParams::checksum() const { return fnv1a64(ad::params_to_json(tensors)); }

ParamVars bind(ad::Tape& tape, const NetworkParams& params) {
  ParamVars vars;
  for (const auto& [name, t] : params.tensors) vars.emplace(name, tape.parameter(name, t));
  return vars;
}

}  // namespace swarmloc::matchnet
