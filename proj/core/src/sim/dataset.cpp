#include "swarmloc/sim/dataset.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"

namespace swarmloc::sim {
namespace {

using nlohmann::json;

class Writer {
 public:
  void raw(std::string_view s) { out_ += s; }
  void num(double v) { out_ += format_double(v); }
  void num(int v) { out_ += std::to_string(v); }
  void vec3(const Vec3& v) {
    raw("[");
    num(v.x());
    raw(",");
    num(v.y());
    raw(",");
    num(v.z());
    raw("]");
  }
  void pose(const Pose& p) {
    raw("{\"q\":[");
    num(p.q().w());
    raw(",");
    num(p.q().x());
    raw(",");
    num(p.q().y());
    raw(",");
    num(p.q().z());
    raw("],\"t\":");
    vec3(p.t());
    raw("}");
  }
  template <class T, class F>
  void list(const std::vector<T>& items, F&& each) {
    raw("[");
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) raw(",");
      each(items[i]);
    }
    raw("]");
  }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

void write_config(Writer& w, const SceneConfig& c) {
  w.raw("{\"n_robots\":");
  w.num(c.n_robots);
  w.raw(",\"world\":");
  w.vec3(c.world);
  auto field = [&](const char* name, double v) {
    w.raw(",\"");
    w.raw(name);
    w.raw("\":");
    w.num(v);
  };
  auto ifield = [&](const char* name, int v) {
    w.raw(",\"");
    w.raw(name);
    w.raw("\":");
    w.num(v);
  };
  ifield("n_trees", c.n_trees);
  field("tree_radius_min", c.tree_radius_min);
  field("tree_radius_max", c.tree_radius_max);
  field("formation_radius", c.formation_radius);
  field("speed", c.speed);
  field("frame_rate", c.frame_rate);
  ifield("n_frames", c.n_frames);
  field("fov_deg", c.fov_deg);
  field("emitter_wedge_deg", c.emitter_wedge_deg);
  field("fake_prob", c.fake_prob);
  field("uwb_sigma", c.uwb_sigma);
  field("uwb_dropout", c.uwb_dropout);
  field("bearing_sigma", c.bearing_sigma);
  field("pvo_t_sigma", c.pvo_t_sigma);
  field("pvo_r_sigma", c.pvo_r_sigma);
  ifield("max_detections", c.max_detections);
  field("lateral_sway", c.lateral_sway);
  field("vertical_sway", c.vertical_sway);
  field("spin_rate", c.spin_rate);
  field("yaw_sway", c.yaw_sway);
  w.raw(",\"seed\":");
  w.raw(std::to_string(c.seed));
  w.raw("}");
}

void write_frame(Writer& w, const SwarmFrame& f) {
  const int n = f.n_robots();
  w.raw("{\"t\":");
  w.num(f.t);
  w.raw(",\"gt\":");
  w.list(f.gt, [&](const Pose& p) { w.pose(p); });
  w.raw(",\"pvo\":");
  w.list(f.pvo, [&](const Pose& p) { w.pose(p); });
  w.raw(",\"uwb\":[");
  for (int i = 0; i < n; ++i) {
    if (i) w.raw(",");
    w.raw("[");
    for (int j = 0; j < n; ++j) {
      if (j) w.raw(",");
      const auto d = i == j ? std::optional<double>(0.0) : f.uwb.get(i, j);
      if (d) {
        w.num(*d);
      } else {
        w.raw("null");
      }
    }
    w.raw("]");
  }
  w.raw("],\"det\":");
  w.list(f.det, [&](const std::vector<Bearing>& ds) {
    w.list(ds, [&](const Bearing& b) { w.vec3(b.u); });
  });
  w.raw(",\"src\":");
  w.list(f.src, [&](const std::vector<int>& s) {
    w.list(s, [&](int v) { w.num(v); });
  });
  w.raw("}");
}

double get_num(const json& j) {
  if (!j.is_number()) throw Error("expected a number");
  return j.get<double>();
}

Vec3 get_vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("expected a 3-vector");
  return Vec3(get_num(j[0]), get_num(j[1]), get_num(j[2]));
}

Pose get_pose(const json& j) {
  const json& q = j.at("q");
  if (!q.is_array() || q.size() != 4) throw Error("expected a quaternion [w,x,y,z]");
  return Pose(Quat(get_num(q[0]), get_num(q[1]), get_num(q[2]), get_num(q[3])), get_vec3(j.at("t")));
}

SceneConfig parse_config(const json& j) {
  SceneConfig c;
  c.n_robots = j.at("n_robots").get<int>();
  c.world = get_vec3(j.at("world"));
  c.n_trees = j.at("n_trees").get<int>();
  c.tree_radius_min = get_num(j.at("tree_radius_min"));
  c.tree_radius_max = get_num(j.at("tree_radius_max"));
  c.formation_radius = get_num(j.at("formation_radius"));
  c.speed = get_num(j.at("speed"));
  c.frame_rate = get_num(j.at("frame_rate"));
  c.n_frames = j.at("n_frames").get<int>();
  c.fov_deg = get_num(j.at("fov_deg"));
  c.emitter_wedge_deg = get_num(j.at("emitter_wedge_deg"));
  c.fake_prob = get_num(j.at("fake_prob"));
  c.uwb_sigma = get_num(j.at("uwb_sigma"));
  c.uwb_dropout = get_num(j.at("uwb_dropout"));
  c.bearing_sigma = get_num(j.at("bearing_sigma"));
  c.pvo_t_sigma = get_num(j.at("pvo_t_sigma"));
  c.pvo_r_sigma = get_num(j.at("pvo_r_sigma"));
  c.max_detections = j.at("max_detections").get<int>();
  c.lateral_sway = get_num(j.at("lateral_sway"));
  c.vertical_sway = get_num(j.at("vertical_sway"));
  c.spin_rate = get_num(j.at("spin_rate"));
  c.yaw_sway = get_num(j.at("yaw_sway"));
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

SwarmFrame parse_frame(const json& j, int n) {
  SwarmFrame f;
  f.t = get_num(j.at("t"));
  for (const json& p : j.at("gt")) f.gt.push_back(get_pose(p));
  for (const json& p : j.at("pvo")) f.pvo.push_back(get_pose(p));
  if (static_cast<int>(f.gt.size()) != n || static_cast<int>(f.pvo.size()) != n) {
    throw Error("gt/pvo length does not match n_robots");
  }
  const json& u = j.at("uwb");
  if (!u.is_array() || static_cast<int>(u.size()) != n) throw Error("uwb must be n_robots x n_robots");
  f.uwb = RangeMatrix(n);
  for (int a = 0; a < n; ++a) {
    if (!u[a].is_array() || static_cast<int>(u[a].size()) != n) {
      throw Error("uwb must be n_robots x n_robots");
    }
    for (int b = a + 1; b < n; ++b) {
      const bool ab = u[a][b].is_null();
      const bool ba = u[b][a].is_null();
      if (ab != ba || (!ab && get_num(u[a][b]) != get_num(u[b][a]))) {
        throw Error("uwb matrix is not symmetric");
      }
      if (!ab) f.uwb.set(a, b, get_num(u[a][b]));
    }
  }
  const json& det = j.at("det");
  if (!det.is_array() || static_cast<int>(det.size()) != n) throw Error("det must have n_robots lists");
  f.det.resize(n);
  for (int o = 0; o < n; ++o) {
    for (const json& b : det[o]) f.det[o].push_back(Bearing{get_vec3(b)});
  }
  f.src.resize(n);
  if (j.contains("src")) {
    const json& src = j["src"];
    if (!src.is_array() || static_cast<int>(src.size()) != n) throw Error("src must have n_robots lists");
    for (int o = 0; o < n; ++o) {
      for (const json& s : src[o]) f.src[o].push_back(s.get<int>());
      if (f.src[o].size() != f.det[o].size()) throw Error("src and det lengths differ");
    }
  } else {
    for (int o = 0; o < n; ++o) f.src[o].assign(f.det[o].size(), kFakeSource);
  }
  return f;
}

}  // namespace

std::string scene_config_to_json(const SceneConfig& c) {
  Writer w;
  write_config(w, c);
  return std::move(w.str());
}

Dataset generate_dataset(const SceneConfig& config) {
  Scene scene = generate_scene(config);
  Dataset d;
  d.config = scene.config;
  d.trees = scene.trees;
  d.frames = sample_frames(scene);
  return d;
}

std::string dataset_to_string(const Dataset& data) {
  Writer w;
  w.raw("{\"format\":\"");
  w.raw(kDatasetFormat);
  w.raw("\",\"config\":");
  write_config(w, data.config);
  w.raw(",\"trees\":");
  w.list(data.trees, [&](const Tree& t) {
    w.raw("[");
    w.num(t.x);
    w.raw(",");
    w.num(t.y);
    w.raw(",");
    w.num(t.radius);
    w.raw(",");
    w.num(t.height);
    w.raw("]");
  });
  w.raw("}\n");
  for (const SwarmFrame& f : data.frames) {
    write_frame(w, f);
    w.raw("\n");
  }
  return std::move(w.str());
}

void write_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << dataset_to_string(data);
  if (!out) throw Error("failed writing " + path);
}

void write_dataset(const Scene& scene, const std::vector<SwarmFrame>& frames,
                   const std::string& path) {
  write_dataset(Dataset{scene.config, scene.trees, frames}, path);
}

Dataset dataset_from_string(const std::string& text) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) -> void {
    throw ParseError(lineno, what + " (last good line " + std::to_string(lineno - 1) + ")");
  };
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!header) {
        if (j.value("format", std::string()) != kDatasetFormat) {
          throw Error(std::string("missing or unknown format tag, expected ") + kDatasetFormat);
        }
        d.config = parse_config(j.at("config"));
        d.config.validate();
        for (const json& t : j.at("trees")) {
          if (!t.is_array() || t.size() != 4) throw Error("tree must be [x,y,radius,height]");
          d.trees.push_back(Tree{get_num(t[0]), get_num(t[1]), get_num(t[2]), get_num(t[3])});
        }
        header = true;
      } else {
        d.frames.push_back(parse_frame(j, d.config.n_robots));
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }
  if (!header) throw ParseError(lineno, "empty dataset: no header line");
  return d;
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return dataset_from_string(ss.str());
}

}  // namespace swarmloc::sim
