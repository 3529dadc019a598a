#include "run_config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"

namespace swarmloc::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& name, const std::string& v) {
  throw ConfigError("config: bad value '" + v + "' for " + name);
}

template <typename T>
T parse_value(const std::string& name, const std::string& v);

template <>
int parse_value<int>(const std::string& name, const std::string& v) {
  std::size_t used = 0;
  try {
    const int x = std::stoi(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  bad_value(name, v);
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& name, const std::string& v) {
  std::size_t used = 0;
  try {
    if (!v.empty() && v[0] != '-') {
      const auto x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  bad_value(name, v);
}

template <>
double parse_value<double>(const std::string& name, const std::string& v) {
  std::size_t used = 0;
  try {
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  bad_value(name, v);
}

template <>
bool parse_value<bool>(const std::string& name, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(name, v);
}

template <>
Vec3 parse_value<Vec3>(const std::string& name, const std::string& v) {
  std::stringstream ss(v);
  std::string part;
  std::vector<double> xs;
  while (std::getline(ss, part, ',')) xs.push_back(parse_value<double>(name, trim(part)));
  if (xs.size() != 3) bad_value(name, v);
  return Vec3(xs[0], xs[1], xs[2]);
}

std::string show(int v) { return std::to_string(v); }
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(double v) { return format_double(v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const Vec3& v) { return format_double(v.x()) + "," + format_double(v.y()) + "," + format_double(v.z()); }

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(RunConfig&)> get;
};

/// `refs` returns every copy of the setting; the first one is reported.
template <typename T, typename Refs>
Field field(std::string section, std::string key, Refs refs) {
  const std::string name = section + "." + key;
  return Field{section, key,
               [=](RunConfig& c, const std::string& v) {
                 const T x = parse_value<T>(name, v);
                 for (T* p : refs(c)) *p = x;
               },
               [=](RunConfig& c) { return show(*refs(c).front()); }};
}

#define ONE(expr) [](RunConfig& c) { return std::vector<decltype(&(expr))>{&(expr)}; }
#define SIM(T, k) field<T>("sim", #k, ONE(c.sim.k))
#define NET(T, k) field<T>("matchnet", #k, ONE(c.net.k))
#define TRAIN(T, k) field<T>("train", #k, ONE(c.train.k))
#define PGO_LM(T, k) \
  field<T>("pgo", #k, [](RunConfig& c) { return std::vector<T*>{&c.eval.lm.k, &c.train.lm.k, &c.runtime.node.lm.k}; })
#define PGO_GRAPH(T, k) \
  field<T>("pgo", #k, [](RunConfig& c) { return std::vector<T*>{&c.eval.graph.k, &c.train.graph.k, &c.runtime.node.graph.k}; })
#define SIMPLE(T, k) \
  field<T>("simple", #k, [](RunConfig& c) { return std::vector<T*>{&c.eval.simple.k, &c.runtime.node.simple.k}; })

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      SIM(int, n_robots),
      SIM(Vec3, world),
      SIM(int, n_trees),
      SIM(double, tree_radius_min),
      SIM(double, tree_radius_max),
      SIM(double, formation_radius),
      SIM(double, speed),
      SIM(double, frame_rate),
      SIM(int, n_frames),
      SIM(double, fov_deg),
      SIM(double, emitter_wedge_deg),
      SIM(double, fake_prob),
      SIM(double, uwb_sigma),
      SIM(double, uwb_dropout),
      SIM(double, bearing_sigma),
      SIM(double, pvo_t_sigma),
      SIM(double, pvo_r_sigma),
      SIM(int, max_detections),
      SIM(double, lateral_sway),
      SIM(double, vertical_sway),
      SIM(double, spin_rate),
      SIM(double, yaw_sway),
      SIM(std::uint64_t, seed),
      NET(int, dim),
      NET(int, layers),
      NET(int, max_det),
      NET(int, head_hidden),
      NET(int, sinkhorn_iters),
      NET(double, threshold),
      NET(double, var_min),
      NET(double, var_max),
      NET(double, var_unmatched),
      NET(double, pos_scale),
      TRAIN(int, epochs),
      TRAIN(int, pretrain_epochs),
      TRAIN(int, batch_size),
      TRAIN(double, prior_sigma),
      TRAIN(double, prior_rot_sigma),
      TRAIN(std::uint64_t, seed),
      TRAIN(int, checkpoint_every),
      TRAIN(int, val_frames),
      TRAIN(double, val_fraction),
      TRAIN(int, max_train_frames),
      field<double>("train", "lr", ONE(c.train.optim.lr)),
      field<double>("train", "weight_decay", ONE(c.train.optim.weight_decay)),
      field<double>("train", "beta1", ONE(c.train.optim.beta1)),
      field<double>("train", "beta2", ONE(c.train.optim.beta2)),
      field<double>("train", "eps", ONE(c.train.optim.eps)),
      field<double>("train", "w_ml", ONE(c.train.weights.ml)),
      field<double>("train", "w_pose", ONE(c.train.weights.pose)),
      field<double>("train", "w_det", ONE(c.train.weights.det)),
      field<double>("train", "w_quat", ONE(c.train.weights.quat)),
      PGO_LM(int, max_iters),
      PGO_LM(double, lambda0),
      PGO_LM(double, lambda_up),
      PGO_LM(double, lambda_down),
      PGO_LM(double, tol),
      PGO_LM(int, unroll_depth),
      PGO_LM(double, lambda_max),
      PGO_GRAPH(double, sigma_rot),
      PGO_GRAPH(double, sigma_range),
      PGO_GRAPH(double, prior_var_t),
      SIMPLE(double, cos_threshold),
      SIMPLE(double, sigma2_base),
      SIMPLE(double, kappa),
      SIMPLE(double, var_unmatched),
      SIMPLE(bool, injective),
      field<int>("eval", "first_frame", ONE(c.eval.first_frame)),
      field<int>("eval", "max_frames", ONE(c.eval.max_frames)),
      field<double>("runtime", "shared_var", ONE(c.runtime.node.shared_var)),
      field<double>("runtime", "process_var", ONE(c.runtime.node.process_var)),
      field<double>("runtime", "initial_var", ONE(c.runtime.node.initial_var)),
      field<bool>("runtime", "neighbor_factors", ONE(c.runtime.node.neighbor_factors)),
      field<bool>("runtime", "fuse_priors", ONE(c.runtime.node.fuse_priors)),
      field<bool>("runtime", "fuse_rotation", ONE(c.runtime.node.fuse_rotation)),
      field<int>("runtime", "first_frame", ONE(c.runtime.first_frame)),
      field<int>("runtime", "max_frames", ONE(c.runtime.max_frames)),
      field<int>("bus", "latency", ONE(c.runtime.bus.latency)),
      field<double>("bus", "drop", ONE(c.runtime.bus.drop)),
      field<std::uint64_t>("bus", "seed", ONE(c.runtime.bus.seed)),
  };
  return all;
}

const Field& find(const std::string& section, const std::string& key) {
  for (const Field& f : fields()) {
    if (f.section == section && f.key == key) return f;
  }
  throw ConfigError("config: unknown key " + section + "." + key);
}

}  // namespace

RunConfig::RunConfig() { net.max_det = 0; }

IniTable parse_ini(const std::string& text) {
  IniTable t;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int no = 0;
  while (std::getline(ss, line)) {
    ++no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(no) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
    if (section.empty()) throw ConfigError("config line " + std::to_string(no) + ": key outside a section");
    const std::string key = trim(line.substr(0, eq));
    if (t[section].count(key)) throw ConfigError("config: duplicate key " + section + "." + key);
    t[section][key] = trim(line.substr(eq + 1));
  }
  return t;
}

void apply_ini(RunConfig& c, const IniTable& table) {
  for (const auto& [section, kv] : table) {
    for (const auto& [key, value] : kv) find(section, key).set(c, value);
  }
}

void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  find(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)))
      .set(c, trim(assignment.substr(eq + 1)));
}

std::string resolved_ini(const RunConfig& c) {
  RunConfig copy = c;
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(copy) + "\n";
  }
  return out;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.section + "." + f.key);
  return out;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    apply_ini(c, parse_ini(ss.str()));
  }
  for (const std::string& o : overrides) apply_override(c, o);
  return c;
}

}  // namespace swarmloc::cli
