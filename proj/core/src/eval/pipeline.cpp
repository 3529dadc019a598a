#include "swarmloc/eval/pipeline.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"
#include "swarmloc/matchnet/network.hpp"
#include "swarmloc/matchnet/observer.hpp"
#include "swarmloc/pgo/frame_graph.hpp"

namespace swarmloc::eval {

using matchnet::MatchInput;
using matchnet::MatchResult;
using matchnet::other_robot;

std::string method_name(Method m) {
  switch (m) {
    case Method::kPvo: return "pvo";
    case Method::kSimple: return "simple";
    case Method::kSimplePgo: return "simple+pgo";
    case Method::kLearned: return "learned";
    case Method::kLearnedPgo: return "learned+pgo";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kPvo, Method::kSimple, Method::kSimplePgo, Method::kLearned, Method::kLearnedPgo}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method '" + name + "' (expected pvo, simple, simple+pgo, learned, learned+pgo)");
}

bool uses_network(Method m) { return m == Method::kLearned || m == Method::kLearnedPgo; }
bool uses_pgo(Method m) { return m == Method::kPvo || m == Method::kSimplePgo || m == Method::kLearnedPgo; }

void EvalConfig::validate() const {
  simple.validate();
  lm.validate();
  if (first_frame < 0 || max_frames < 0) throw ConfigError("eval: frame window must be >= 0");
}

namespace {

std::vector<MatchResult> front_end(Method method, const matchnet::NetworkParams* params,
                                   const std::vector<MatchInput>& inputs, const SimpleMatchConfig& simple) {
  if (uses_network(method)) return matchnet::forward(*params, inputs);
  std::vector<MatchResult> out;
  for (const MatchInput& in : inputs) out.push_back(simple_match(in, simple));
  return out;
}

double rotation_rms(const std::vector<std::vector<Pose>>& est, const std::vector<Pose>& gt) {
  const int n = static_cast<int>(gt.size());
  double s = 0.0;
  for (int o = 0; o < n; ++o) {
    for (int j = 0; j < n; ++j) {
      if (o == j) continue;
      const Quat rel = relative(gt[o], gt[j]).q().conjugate() * est[o][j].q();
      s += log_so3(rel).squaredNorm();
    }
  }
  return std::sqrt(s / (n * (n - 1)));
}

}  // namespace

EvalReport run_pipeline(const sim::Dataset& data, Method method, const matchnet::NetworkParams* params,
                        const EvalConfig& config) {
  config.validate();
  if (uses_network(method)) {
    if (!params) throw ConfigError("eval: method " + method_name(method) + " needs a checkpoint");
    if (params->config.max_det < data.config.max_det()) {
      throw ShapeError("eval: dataset allows more detections than the network's max_det");
    }
  }
  const int n = data.n_robots();
  const int begin = config.first_frame;
  int end = data.n_frames();
  if (config.max_frames > 0) end = std::min(end, begin + config.max_frames);
  if (begin >= end) throw ConfigError("eval: empty frame window");
  const double var_unmatched = params ? params->config.var_unmatched : config.simple.var_unmatched;

  EvalReport rep;
  rep.method = method_name(method);
  rep.n_robots = n;
  rep.n_frames = end - begin;
  RpeAccumulator rpe(n);

  // +pgo and pvo: one state in robot 0's frame. Front-end only: one table of
  // relative poses per observer.
  std::vector<Pose> state;
  std::vector<std::vector<Pose>> tables(n);
  const sim::SwarmFrame& f0 = data.frames[begin];
  for (int j = 0; j < n; ++j) state.push_back(relative(f0.gt[0], f0.gt[j]));
  for (int o = 0; o < n; ++o) {
    for (int j = 0; j < n; ++j) tables[o].push_back(relative(f0.gt[o], f0.gt[j]));
  }

  for (int f = begin; f < end; ++f) {
    const sim::SwarmFrame& fr = data.frames[f];
    FrameDiagnostics d;
    d.frame = f;
    const bool first = f == begin;
    if (!first) {
      const Pose inv0 = inverse(fr.pvo[0]);
      for (int j = 0; j < n; ++j) state[j] = compose(compose(inv0, state[j]), fr.pvo[j]);
      state[0] = Pose::identity();
      for (int o = 0; o < n; ++o) {
        const Pose inv = inverse(fr.pvo[o]);
        for (int j = 0; j < n; ++j) tables[o][j] = j == o ? Pose::identity() : compose(compose(inv, tables[o][j]), fr.pvo[j]);
      }
    }

    RelativePositions estimate;
    if (method == Method::kPvo) {
      const pgo::FactorGraph g = pgo::make_graph(0, state, {}, config.graph);
      const pgo::SolveResult s = pgo::lm_solve(g, config.lm);
      state = s.poses;
      d.solver_iterations = s.iterations;
      estimate = relative_positions(state);
    } else {
      std::vector<MatchInput> inputs;
      std::vector<std::vector<Pose>> priors(n);
      for (int o = 0; o < n; ++o) {
        if (uses_pgo(method)) {
          for (int j = 0; j < n; ++j) priors[o].push_back(relative(state[o], state[j]));
        } else {
          priors[o] = tables[o];
        }
        inputs.push_back(matchnet::observer_input(o, priors[o], fr.det[o], matchnet::uwb_row(fr.uwb, o)));
      }
      const std::vector<MatchResult> results = front_end(method, params, inputs, config.simple);
      PRF1 fp;
      for (int o = 0; o < n; ++o) {
        fp.add(results[o].assignment, matchnet::gt_assignment(fr, o));
        d.matched += results[o].matched_count();
      }
      d.tp = fp.tp;
      d.fp = fp.fp;
      d.fn = fp.fn;
      rep.matching += fp;

      if (uses_pgo(method)) {
        std::vector<const MatchResult*> ptrs;
        for (const MatchResult& r : results) ptrs.push_back(&r);
        const pgo::FrameGraph fg =
            pgo::build_frame_graph(0, state, ptrs, pgo::range_table(fr.uwb), var_unmatched, config.graph);
        const pgo::SolveResult s = pgo::lm_solve(fg.graph, config.lm);
        state = s.poses;
        d.solver_iterations = s.iterations;
        estimate = relative_positions(state);
      } else {
        estimate.assign(n, std::vector<Vec3>(n, Vec3::Zero()));
        for (int o = 0; o < n; ++o) {
          for (std::size_t s = 0; s < results[o].position.size(); ++s) {
            const int j = other_robot(o, static_cast<int>(s));
            if (results[o].refined[s]) tables[o][j] = Pose(tables[o][j].q(), results[o].position[s]);
            estimate[o][j] = tables[o][j].t();
          }
        }
      }
    }
    if (uses_pgo(method)) {
      std::vector<std::vector<Pose>> rel(n);
      for (int o = 0; o < n; ++o) {
        for (int j = 0; j < n; ++j) rel[o].push_back(relative(state[o], state[j]));
      }
      d.rot_err = rotation_rms(rel, fr.gt);
    } else {
      d.rot_err = rotation_rms(tables, fr.gt);
    }
    if (config.keep_positions) {
      std::vector<Vec3> pos;
      for (int j = 0; j < n; ++j) pos.push_back(uses_pgo(method) ? state[j].t() : tables[0][j].t());
      rep.positions.push_back(std::move(pos));
    }
    const RelativePositions gt = relative_positions(fr.gt);
    rpe.add(estimate, gt);
    d.rpe = rpe.take_window();
    rep.frames.push_back(d);
  }
  rep.rpe_rmse = rpe.rmse();
  rep.pair_rpe = rpe.pair_rmse();
  return rep;
}

std::string report_to_json(const EvalReport& r, bool include_frames) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["n_robots"] = r.n_robots;
  j["n_frames"] = r.n_frames;
  j["rpe_rmse"] = r.rpe_rmse;
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (int i = 0; i < r.pair_rpe.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int k = 0; k < r.pair_rpe.cols(); ++k) row.push_back(r.pair_rpe(i, k));
    pairs.push_back(row);
  }
  j["pair_rpe"] = pairs;
  j["matching"] = {{"tp", r.matching.tp},
                   {"fp", r.matching.fp},
                   {"fn", r.matching.fn},
                   {"precision", r.matching.precision()},
                   {"recall", r.matching.recall()},
                   {"f1", r.matching.f1()}};
  if (include_frames) {
    nlohmann::ordered_json frames = nlohmann::ordered_json::array();
    for (const FrameDiagnostics& d : r.frames) {
      frames.push_back({{"frame", d.frame}, {"rpe", d.rpe}, {"rot_err", d.rot_err}, {"tp", d.tp}, {"fp", d.fp}, {"fn", d.fn},
                        {"matched", d.matched}, {"solver_iterations", d.solver_iterations}});
    }
    j["frames"] = frames;
  }
  return j.dump(2);
}

void write_report(const EvalReport& r, const std::string& prefix) {
  auto open = [](const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    return out;
  };
  {
    std::ofstream out = open(prefix + ".json");
    out << report_to_json(r) << "\n";
  }
  {
    std::ofstream out = open(prefix + "_frames.csv");
    out << "frame,rpe,rot_err,tp,fp,fn,matched,solver_iterations\n";
    for (const FrameDiagnostics& d : r.frames) {
      out << d.frame << "," << format_double(d.rpe) << "," << format_double(d.rot_err) << "," << d.tp << "," << d.fp << "," << d.fn << "," << d.matched
          << "," << d.solver_iterations << "\n";
    }
  }
  std::ofstream out = open(prefix + "_pairs.csv");
  out << "observer,target,rpe\n";
  for (int i = 0; i < r.pair_rpe.rows(); ++i) {
    for (int k = 0; k < r.pair_rpe.cols(); ++k) {
      if (i != k) out << i << "," << k << "," << format_double(r.pair_rpe(i, k)) << "\n";
    }
  }
}

}  // namespace swarmloc::eval
