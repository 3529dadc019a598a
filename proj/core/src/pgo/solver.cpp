#include "swarmloc/pgo/solver.hpp"

#include <memory>

#include "lm_core.hpp"
#include "swarmloc/error.hpp"

namespace swarmloc::pgo {
namespace {

using detail::PoseT;
using detail::Problem;
using detail::QuatT;

template <class S>
Problem<S> skeleton(const FactorGraph& g) {
  Problem<S> p;
  p.n_robots = g.n_robots;
  p.slot.resize(g.n_robots);
  for (int r = 0; r < g.n_robots; ++r) p.slot[r] = g.var_index(r);
  return p;
}

Problem<double> to_problem(const FactorGraph& g) {
  Problem<double> p = skeleton<double>(g);
  for (const auto& f : g.mutual) {
    p.mutual.push_back({f.i, f.j, {f.measured.x(), f.measured.y(), f.measured.z()}, {f.info.x(), f.info.y(), f.info.z()}});
  }
  for (const auto& f : g.prior) {
    p.prior.push_back({f.robot, detail::to_q<double>(f.prior.q()),
                       {f.prior.t().x(), f.prior.t().y(), f.prior.t().z()},
                       {f.info_t.x(), f.info_t.y(), f.info_t.z()},
                       {f.info_r.x(), f.info_r.y(), f.info_r.z()}});
  }
  for (const auto& f : g.range) p.range.push_back({f.i, f.j, f.distance, f.info});
  return p;
}

template <class S>
std::vector<PoseT<S>> init_state(const FactorGraph& g) {
  std::vector<PoseT<S>> x(g.n_robots);
  for (int r = 0; r < g.n_robots; ++r) {
    x[r].q = detail::to_q<S>(g.init[r].q());
    for (int k = 0; k < 3; ++k) x[r].t[k] = S(g.init[r].t()[k]);
  }
  return x;
}

Pose to_pose(const PoseT<double>& p) {
  return Pose(Quat(p.q.w, p.q.x, p.q.y, p.q.z), Vec3(p.t[0], p.t[1], p.t[2]));
}

SolveResult to_result(const detail::RunStats& st) {
  SolveResult r;
  r.initial_cost = st.initial_cost;
  r.final_cost = st.final_cost;
  r.iterations = st.iterations;
  r.accepted = st.accepted;
  r.converged = st.converged;
  r.cost_trace = st.trace;
  return r;
}

std::vector<PoseT<double>> from_poses(const std::vector<Pose>& poses) {
  std::vector<PoseT<double>> x(poses.size());
  for (std::size_t r = 0; r < poses.size(); ++r) {
    x[r].q = detail::to_q<double>(poses[r].q());
    for (int k = 0; k < 3; ++k) x[r].t[k] = poses[r].t()[k];
  }
  return x;
}

}  // namespace

Linearization linearize(const FactorGraph& graph, const std::vector<Pose>& poses) {
  graph.validate();
  if (static_cast<int>(poses.size()) != graph.n_robots) throw ShapeError("linearize: one pose per robot");
  const Problem<double> p = to_problem(graph);
  std::vector<double> h, g;
  detail::linearize(p, from_poses(poses), h, g);
  const int dim = p.dim();
  Linearization out;
  out.h = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(h.data(), dim, dim);
  out.g = Eigen::Map<const Eigen::VectorXd>(g.data(), dim);
  return out;
}

std::vector<Pose> retract(const FactorGraph& graph, const std::vector<Pose>& poses, const Eigen::VectorXd& dx) {
  const Problem<double> p = skeleton<double>(graph);
  if (dx.size() != p.dim()) throw ShapeError("retract: increment has the wrong size");
  const std::vector<double> d(dx.data(), dx.data() + dx.size());
  const auto x = detail::retract(p, from_poses(poses), d);
  std::vector<Pose> out;
  for (const auto& pose : x) out.push_back(to_pose(pose));
  return out;
}

void LMSettings::validate() const {
  if (max_iters < 1 || !(lambda0 > 0.0) || !(lambda_up > 1.0) || !(lambda_down > 0.0 && lambda_down < 1.0) ||
      !(tol > 0.0) || unroll_depth < 0 || unroll_depth > max_iters || !(lambda_max > lambda0)) {
    throw ConfigError("lm settings: values out of range (need positive settings, unroll_depth <= max_iters)");
  }
}

SolveResult lm_solve(const FactorGraph& graph, const LMSettings& settings) {
  graph.validate();
  settings.validate();
  const Problem<double> p = to_problem(graph);
  detail::RunStats st;
  const auto x = detail::run(p, init_state<double>(graph), settings, -1, st);
  SolveResult r = to_result(st);
  r.poses.reserve(x.size());
  for (const auto& pose : x) r.poses.push_back(to_pose(pose));
  r.poses[graph.reference] = Pose::identity();
  return r;
}

DiffOutput lm_solve_differentiable(const FactorGraph& graph, const LMSettings& settings, ad::Tape& tape,
                                   const DiffInputs& inputs) {
  graph.validate();
  settings.validate();
  const std::size_t nm = graph.mutual.size();
  const std::size_t np = graph.prior.size();
  auto value_or = [&](const ad::Var& v, std::size_t rows, auto fill) {
    if (v.valid()) {
      if (v.rows() != rows || v.cols() != 3) throw ShapeError("lm_solve_differentiable: input must be rows x 3");
      return v;
    }
    ad::Tensor t(rows, 3);
    for (std::size_t r = 0; r < rows; ++r) {
      const Vec3 x = fill(r);
      for (int k = 0; k < 3; ++k) t(r, k) = x[k];
    }
    return tape.constant(std::move(t));
  };
  const ad::Var mm = value_or(inputs.mutual_measured, nm, [&](std::size_t r) { return graph.mutual[r].measured; });
  const ad::Var mi = value_or(inputs.mutual_info, nm, [&](std::size_t r) { return graph.mutual[r].info; });
  const ad::Var pt = value_or(inputs.prior_t, np, [&](std::size_t r) { return graph.prior[r].prior.t(); });
  const ad::Var pi = value_or(inputs.prior_info_t, np, [&](std::size_t r) { return graph.prior[r].info_t; });

  auto real_tape = std::make_shared<ad::RealTape>();
  ad::RealTapeScope scope(*real_tape);
  using ad::Real;
  std::vector<Real> leaves;
  const std::vector<ad::Var> ins{mm, mi, pt, pi};
  std::vector<std::size_t> leaf_begin;
  for (const ad::Var& v : ins) {
    leaf_begin.push_back(leaves.size());
    for (double x : v.value().data()) leaves.push_back(Real::variable(x));
  }
  auto leaf = [&](int input, std::size_t row, int col) -> const Real& {
    return leaves[leaf_begin[input] + row * 3 + col];
  };

  Problem<Real> p = skeleton<Real>(graph);
  for (std::size_t r = 0; r < nm; ++r) {
    const auto& f = graph.mutual[r];
    p.mutual.push_back({f.i, f.j, {leaf(0, r, 0), leaf(0, r, 1), leaf(0, r, 2)}, {leaf(1, r, 0), leaf(1, r, 1), leaf(1, r, 2)}});
  }
  std::vector<PoseT<Real>> x0 = init_state<Real>(graph);
  std::vector<bool> seeded(graph.n_robots, false);
  for (std::size_t r = 0; r < np; ++r) {
    const auto& f = graph.prior[r];
    p.prior.push_back({f.robot, detail::to_q<Real>(f.prior.q()),
                       {leaf(2, r, 0), leaf(2, r, 1), leaf(2, r, 2)},
                       {leaf(3, r, 0), leaf(3, r, 1), leaf(3, r, 2)},
                       {Real(f.info_r.x()), Real(f.info_r.y()), Real(f.info_r.z())}});
    // Variables start at their (first) prior translation, on the gradient path.
    if (f.robot != graph.reference && !seeded[f.robot]) {
      seeded[f.robot] = true;
      for (int k = 0; k < 3; ++k) x0[f.robot].t[k] = leaf(2, r, k);
    }
  }
  for (const auto& f : graph.range) p.range.push_back({f.i, f.j, Real(f.distance), Real(f.info)});

  detail::RunStats st;
  std::vector<PoseT<Real>> x = x0;
  if (settings.unroll_depth > 0) x = detail::run(p, std::move(x0), settings, settings.unroll_depth, st);
  else {
    st.initial_cost = st.final_cost = detail::value_of(detail::cost(p, x));
    st.trace = {st.initial_cost};
  }

  const std::size_t n = static_cast<std::size_t>(graph.n_robots);
  ad::Tensor out(n, 7);
  std::vector<std::int32_t> out_idx(n * 7, ad::RealTape::kNone);
  for (std::size_t r = 0; r < n; ++r) {
    if (static_cast<int>(r) == graph.reference) {
      out(r, 3) = 1.0;
      continue;
    }
    const Real vals[7] = {x[r].t[0], x[r].t[1], x[r].t[2], x[r].q.w, x[r].q.x, x[r].q.y, x[r].q.z};
    for (int k = 0; k < 7; ++k) {
      out(r, k) = vals[k].value();
      out_idx[r * 7 + k] = vals[k].index();
    }
  }
  std::vector<std::int32_t> leaf_idx;
  leaf_idx.reserve(leaves.size());
  for (const Real& l : leaves) leaf_idx.push_back(l.index());

  const ad::Var packed = ad::custom(
      ins, std::move(out),
      [real_tape, out_idx, leaf_idx, leaf_begin](const ad::Tensor& g, std::vector<ad::Tensor*>& grads) {
        std::vector<double> adj(real_tape->size(), 0.0);
        for (std::size_t k = 0; k < out_idx.size(); ++k) {
          if (out_idx[k] != ad::RealTape::kNone) adj[static_cast<std::size_t>(out_idx[k])] += g[k];
        }
        real_tape->backward(adj);
        for (std::size_t in = 0; in < grads.size(); ++in) {
          const std::size_t end = in + 1 < leaf_begin.size() ? leaf_begin[in + 1] : leaf_idx.size();
          for (std::size_t l = leaf_begin[in]; l < end; ++l) {
            (*grads[in])[l - leaf_begin[in]] += adj[static_cast<std::size_t>(leaf_idx[l])];
          }
        }
      });

  DiffOutput res;
  res.t = ad::slice(packed, 0, n, 0, 3);
  res.q = ad::slice(packed, 0, n, 3, 4);
  res.solve = to_result(st);
  res.solve.poses.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const ad::Tensor& v = packed.value();
    res.solve.poses.push_back(Pose(Quat(v(r, 3), v(r, 4), v(r, 5), v(r, 6)), Vec3(v(r, 0), v(r, 1), v(r, 2))));
  }
  return res;
}

}  // namespace swarmloc::pgo
