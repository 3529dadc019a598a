#include "swarmloc/runtime/node.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"
#include "swarmloc/matchnet/observer.hpp"
#include "swarmloc/pgo/frame_graph.hpp"

namespace swarmloc::runtime {

using matchnet::MatchResult;

NodeView make_view(const sim::SwarmFrame& frame, int frame_index, int robot) {
  if (robot < 0 || robot >= frame.n_robots()) throw ShapeError("make_view: robot out of range");
  NodeView v;
  v.robot = robot;
  v.frame = frame_index;
  v.pvo = frame.pvo[robot];
  v.det = frame.det[robot];
  v.uwb = matchnet::uwb_row(frame.uwb, robot);
  return v;
}

void NodeConfig::validate() const {
  simple.validate();
  lm.validate();
  for (double v : {shared_var, initial_var}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("runtime: variances must be finite and > 0");
  }
  if (!(process_var >= 0.0) || !std::isfinite(process_var)) throw ConfigError("runtime: process_var must be >= 0");
}

Node::Node(int robot, std::vector<Pose> initial, const matchnet::NetworkParams* params, NodeConfig config)
    : robot_(robot),
      n_(static_cast<int>(initial.size())),
      params_(params),
      config_(std::move(config)),
      estimate_(std::move(initial)) {
  config_.validate();
  if (n_ < 2 || robot_ < 0 || robot_ >= n_) throw ShapeError("node: bad robot index or swarm size");
  estimate_[robot_] = Pose::identity();
  var_.assign(n_, config_.initial_var);
  var_[robot_] = 0.0;
  last_inc_.assign(n_, Pose::identity());
}

BusMessage Node::message(const NodeView& view) const {
  BusMessage m;
  m.sender = robot_;
  m.frame = view.frame;
  m.payload.pvo = view.pvo;
  m.payload.poses = estimate_;
  return m;
}

void Node::propagate(const NodeView& view) {
  const Pose inv = inverse(view.pvo);
  for (int j = 0; j < n_; ++j) {
    if (j == robot_) continue;
    estimate_[j] = compose(compose(inv, estimate_[j]), last_inc_[j]);
    var_[j] += config_.process_var;
  }
}

void Node::fuse(int k, const Pose& est, double var_est) {
  const double w = var_[k] / (var_[k] + var_est);
  const Pose& p = estimate_[k];
  const Quat q = config_.fuse_rotation ? p.q() * exp_so3(w * log_so3(p.q().conjugate() * est.q())) : p.q();
  const Vec3 t = (1.0 - w) * p.t() + w * est.t();
  estimate_[k] = Pose(q.normalized(), t);
  var_[k] = var_[k] * var_est / (var_[k] + var_est);
}

void Node::step(const NodeView& view, const std::vector<BusMessage>& inbox) {
  if (view.robot != robot_) throw ShapeError("node: view belongs to another robot");
  if (static_cast<int>(view.uwb.size()) != n_) throw ShapeError("node: one range entry per robot");

  // Latest message per neighbor; its PVO becomes the neighbor's increment.
  std::vector<const BusMessage*> latest(n_, nullptr);
  for (const BusMessage& m : inbox) {
    if (m.sender < 0 || m.sender >= n_ || m.sender == robot_) throw ShapeError("node: bad sender");
    if (static_cast<int>(m.payload.poses.size()) != n_) throw ShapeError("node: message pose count");
    if (!latest[m.sender] || latest[m.sender]->frame <= m.frame) latest[m.sender] = &m;
  }
  for (int j = 0; j < n_; ++j) {
    if (latest[j]) last_inc_[j] = latest[j]->payload.pvo;
  }
  last_inc_[robot_] = view.pvo;
  const bool first = first_;
  if (!first) propagate(view);
  first_ = false;
  const std::vector<Pose> inc = first ? std::vector<Pose>(n_, Pose::identity()) : last_inc_;

  // Neighbor j's poses from the previous frame, brought to this frame and into
  // our own frame: k in j's frame, and j itself from j's view of us.
  std::vector<pgo::MutualFactor> shared;
  const Vec3 info = Vec3::Constant(1.0 / config_.shared_var);
  for (int j = 0; j < n_; ++j) {
    if (!latest[j]) continue;
    const std::vector<Pose>& chi = latest[j]->payload.poses;
    const Pose inv_j = inverse(inc[j]);
    std::vector<Pose> in_j(n_);
    for (int k = 0; k < n_; ++k) in_j[k] = compose(compose(inv_j, chi[k]), inc[k]);
    in_j[j] = Pose::identity();
    if (config_.fuse_priors) {
      // The estimate goes through a rotation known to about sigma_rot, so its
      // variance grows with the lever arm.
      const double s2 = config_.graph.sigma_rot * config_.graph.sigma_rot;
      const Pose back = inverse(in_j[robot_]);
      fuse(j, back, config_.shared_var + s2 * back.t().squaredNorm());
      for (int k = 0; k < n_; ++k) {
        if (k == j || k == robot_) continue;
        const double v = config_.shared_var + var_[j] + s2 * in_j[k].t().squaredNorm();
        fuse(k, compose(estimate_[j], in_j[k]), v);
      }
    }
    if (config_.neighbor_factors) {
      for (int k = 0; k < n_; ++k) {
        if (k != j) shared.push_back(pgo::MutualFactor{j, k, in_j[k].t(), info});
      }
    }
  }

  const matchnet::MatchInput input = matchnet::observer_input(robot_, estimate_, view.det, view.uwb);
  result_ = params_ ? matchnet::forward(*params_, input) : eval::simple_match(input, config_.simple);
  const double var_unmatched = params_ ? params_->config.var_unmatched : config_.simple.var_unmatched;

  pgo::RangeTable ranges(n_, std::vector<std::optional<double>>(n_));
  for (int j = 0; j < n_; ++j) {
    if (j == robot_) continue;
    ranges[robot_][j] = view.uwb[j];
    ranges[j][robot_] = view.uwb[j];
  }
  std::vector<const MatchResult*> results(n_, nullptr);
  results[robot_] = &result_;
  pgo::FrameGraph fg = pgo::build_frame_graph(robot_, estimate_, results, ranges, var_unmatched, config_.graph);
  fg.graph.mutual.insert(fg.graph.mutual.end(), shared.begin(), shared.end());
  const pgo::SolveResult s = pgo::lm_solve(fg.graph, config_.lm);
  iterations_ = s.iterations;
  estimate_ = s.poses;
  estimate_[robot_] = Pose::identity();
  for (std::size_t p = 0; p < result_.refined.size(); ++p) {
    if (!result_.refined[p]) continue;
    const Vec3& v = result_.variance[p];
    var_[matchnet::other_robot(robot_, static_cast<int>(p))] = v.mean();
  }
}

void RuntimeConfig::validate() const {
  node.validate();
  bus.validate();
  if (first_frame < 0 || max_frames < 0) throw ConfigError("runtime: frame window must be >= 0");
}

DecentralizedReport run_decentralized(const sim::Dataset& data, const matchnet::NetworkParams* params,
                                      const RuntimeConfig& config) {
  config.validate();
  if (params && params->config.max_det < data.config.max_det()) {
    throw ShapeError("runtime: dataset allows more detections than the network's max_det");
  }
  const int n = data.n_robots();
  const int begin = config.first_frame;
  int end = data.n_frames();
  if (config.max_frames > 0) end = std::min(end, begin + config.max_frames);
  if (begin >= end) throw ConfigError("runtime: empty frame window");

  const sim::SwarmFrame& f0 = data.frames[begin];
  std::vector<Node> nodes;
  for (int i = 0; i < n; ++i) {
    std::vector<Pose> init;
    for (int j = 0; j < n; ++j) init.push_back(relative(f0.gt[i], f0.gt[j]));
    nodes.emplace_back(i, std::move(init), params, config.node);
  }
  Bus bus(n, config.bus);

  DecentralizedReport rep;
  rep.n_robots = n;
  rep.n_frames = end - begin;
  std::vector<eval::RpeAccumulator> rpe(n, eval::RpeAccumulator(n));
  eval::RpeAccumulator pooled(n);
  for (int f = begin; f < end; ++f) {
    const sim::SwarmFrame& fr = data.frames[f];
    std::vector<NodeView> views;
    for (int i = 0; i < n; ++i) {
      views.push_back(make_view(fr, f, i));
      BusMessage m = nodes[i].message(views[i]);
      rep.messages.push_back(MessageLogRow{f, i, 1, m.byte_size()});
      bus.send(std::move(m));
    }
    const eval::RelativePositions gt = eval::relative_positions(fr.gt);
    std::vector<double> frame_rpe(n);
    for (int i = 0; i < n; ++i) {
      nodes[i].step(views[i], bus.deliver(i, f));
      rep.matching.add(nodes[i].last_result().assignment, matchnet::gt_assignment(fr, i));
      eval::RelativePositions est(n, std::vector<Vec3>(n, Vec3::Zero()));
      for (int j = 0; j < n; ++j) est[i][j] = nodes[i].estimate()[j].t();
      rpe[i].add_row(i, est, gt);
      pooled.add_row(i, est, gt);
      frame_rpe[i] = rpe[i].take_window();
    }
    rep.node_frame_rpe.push_back(std::move(frame_rpe));
    bus.prune(f + 1);
  }
  for (int i = 0; i < n; ++i) rep.node_rpe.push_back(rpe[i].rmse());
  rep.rpe_rmse = pooled.rmse();
  return rep;
}

std::string decentralized_to_json(const DecentralizedReport& r) {
  nlohmann::ordered_json j;
  j["n_robots"] = r.n_robots;
  j["n_frames"] = r.n_frames;
  j["rpe_rmse"] = r.rpe_rmse;
  j["node_rpe"] = r.node_rpe;
  j["matching"] = {{"tp", r.matching.tp},
                   {"fp", r.matching.fp},
                   {"fn", r.matching.fn},
                   {"precision", r.matching.precision()},
                   {"recall", r.matching.recall()},
                   {"f1", r.matching.f1()}};
  long messages = 0;
  std::size_t bytes = 0;
  for (const MessageLogRow& m : r.messages) {
    messages += m.messages;
    bytes += m.bytes;
  }
  j["messages"] = messages;
  j["bytes"] = bytes;
  return j.dump(2);
}

void write_decentralized(const DecentralizedReport& r, const std::string& prefix) {
  auto open = [](const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    return out;
  };
  {
    std::ofstream out = open(prefix + ".json");
    out << decentralized_to_json(r) << "\n";
  }
  {
    std::ofstream out = open(prefix + "_messages.csv");
    out << "frame,robot,messages,bytes\n";
    for (const MessageLogRow& m : r.messages) out << m.frame << "," << m.robot << "," << m.messages << "," << m.bytes << "\n";
  }
  std::ofstream out = open(prefix + "_nodes.csv");
  out << "frame";
  for (int i = 0; i < r.n_robots; ++i) out << ",node" << i;
  out << "\n";
  for (std::size_t f = 0; f < r.node_frame_rpe.size(); ++f) {
    out << f;
    for (double v : r.node_frame_rpe[f]) out << "," << format_double(v);
    out << "\n";
  }
}

}  // namespace swarmloc::runtime
