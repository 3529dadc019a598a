#include "swarmloc/matchnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "swarmloc/error.hpp"

namespace swarmloc::matchnet {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

const Var& param(const ParamVars& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ShapeError("matchnet: missing parameter " + name);
  return it->second;
}

Var linear(const ParamVars& p, const std::string& w, const std::string& b, const Var& x) {
  return ad::add_row(ad::matmul(x, param(p, w)), param(p, b));
}

Tensor bearing_rows(const std::vector<Bearing>& b) {
  Tensor t(b.size(), 3);
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (int k = 0; k < 3; ++k) t(i, k) = b[i].u[k];
  }
  return t;
}

// One attention stage followed by the residual MLP update.
Var attend(const ParamVars& p, const std::string& prefix, const Var& x,
           const std::vector<ad::KeyRange>& ranges, double scale) {
  const Var q = ad::matmul(x, param(p, prefix + "wq"));
  const Var k = ad::matmul(x, param(p, prefix + "wk"));
  const Var v = ad::matmul(x, param(p, prefix + "wv"));
  const Var msg = ad::range_attention(q, k, v, ranges, scale);
  const Var h = ad::relu(linear(p, prefix + "w0", prefix + "b0", ad::concat_cols({x, msg})));
  return ad::add(x, linear(p, prefix + "w1", prefix + "b1", h));
}

MatchResult unmatched_result(const MatchNetConfig& c, const MatchInput& in) {
  MatchResult r;
  const int n = in.n();
  const int m = in.m();
  r.assignment.assign(n, -1);
  r.prob.assign(n, 0.0);
  r.position = in.prior_positions;
  r.variance.assign(n, Vec3::Constant(c.var_unmatched));
  r.refined.assign(n, false);
  r.p_bar = Eigen::MatrixXd::Zero(n + 1, m + 1);
  return r;
}

}  // namespace

MatchInput MatchInput::from_priors(std::vector<Vec3> prior_positions, std::vector<Bearing> detections,
                                   std::vector<std::optional<double>> ranges) {
  MatchInput in;
  in.prior_bearings.reserve(prior_positions.size());
  for (const Vec3& p : prior_positions) in.prior_bearings.push_back(Bearing::from_vector(p));
  in.prior_positions = std::move(prior_positions);
  in.det_bearings = std::move(detections);
  in.uwb_ranges = std::move(ranges);
  in.validate();
  return in;
}

void MatchInput::validate() const {
  if (prior_positions.empty()) throw ShapeError("MatchInput: at least one prior is required");
  if (prior_bearings.size() != prior_positions.size() || uwb_ranges.size() != prior_positions.size()) {
    throw ShapeError("MatchInput: priors, prior bearings and ranges must have equal length");
  }
  for (const auto* set : {&prior_bearings, &det_bearings}) {
    for (const Bearing& b : *set) {
      if (std::abs(b.u.norm() - 1.0) > 1e-6) throw GeomError("MatchInput: bearing is not unit norm");
    }
  }
}

int MatchResult::matched_count() const {
  return static_cast<int>(std::count_if(assignment.begin(), assignment.end(), [](int a) { return a >= 0; }));
}

Var encode(const ParamVars& p, const Var& bearings) {
  const Var h = ad::relu(linear(p, "enc.w0", "enc.b0", bearings));
  return linear(p, "enc.w1", "enc.b1", h);
}

Var gnn_forward_stacked(const ParamVars& p, const MatchNetConfig& c, const Var& x,
                        const std::vector<GnnBlock>& blocks) {
  const std::size_t rows = x.rows();
  std::vector<ad::KeyRange> self_r(rows, {0, 0});
  std::vector<ad::KeyRange> cross_r(rows, {0, 0});
  for (const GnnBlock& b : blocks) {
    const ad::KeyRange pr{b.prior_begin, b.prior_begin + b.n};
    const ad::KeyRange dr{b.det_begin, b.det_begin + b.m};
    for (std::size_t i = pr.first; i < pr.second; ++i) {
      self_r[i] = pr;
      cross_r[i] = dr;
    }
    for (std::size_t i = dr.first; i < dr.second; ++i) {
      self_r[i] = dr;
      cross_r[i] = pr;
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.dim));
  Var h = x;
  for (int l = 0; l < c.layers; ++l) {
    const std::string base = "gnn." + std::to_string(l) + ".";
    h = attend(p, base + "self.", h, self_r, scale);
    h = attend(p, base + "cross.", h, cross_r, scale);
  }
  return h;
}

std::pair<Var, Var> gnn_forward(const ParamVars& p, const MatchNetConfig& c, const Var& prior_emb,
                                const Var& det_emb) {
  const std::size_t n = prior_emb.rows();
  const std::size_t m = det_emb.rows();
  const Var x = m > 0 ? ad::concat_rows({prior_emb, det_emb}) : prior_emb;
  const Var h = gnn_forward_stacked(p, c, x, {GnnBlock{0, n, n, m}});
  const Var fp = ad::slice(h, 0, n, 0, h.cols());
  const Var fd = m > 0 ? ad::slice(h, n, m, 0, h.cols()) : det_emb;
  return {fp, fd};
}

Var score(const Var& f_prior, const Var& f_det, const Var& z) {
  if (f_prior.cols() != f_det.cols()) throw ShapeError("score: embedding widths differ");
  const std::size_t n = f_prior.rows();
  const std::size_t m = f_det.rows();
  const double inv = 1.0 / std::sqrt(static_cast<double>(f_prior.cols()));
  const Var s = ad::scale(ad::matmul(f_prior, ad::transpose(f_det)), inv);
  const Var top = ad::concat_cols({s, ad::broadcast(z, n, 1)});
  return ad::concat_rows({top, ad::broadcast(z, 1, m + 1)});
}

Var log_sinkhorn(const Var& s_bar, int iters) {
  if (iters < 1) throw Error("sinkhorn: iters must be >= 1");
  const std::size_t rows = s_bar.rows();
  const std::size_t cols = s_bar.cols();
  if (rows < 2 || cols < 2) throw ShapeError("sinkhorn: needs at least one prior and one detection");
  Tape& t = *s_bar.tape();
  const double n = static_cast<double>(rows - 1);
  const double m = static_cast<double>(cols - 1);
  Tensor log_mu(rows, 1, 0.0);
  log_mu[rows - 1] = std::log(m);
  Tensor log_nu(1, cols, 0.0);
  log_nu[cols - 1] = std::log(n);
  const Var lmu = t.constant(std::move(log_mu));
  const Var lnu = t.constant(std::move(log_nu));
  Var u = t.constant(Tensor(rows, 1, 0.0));
  Var v = t.constant(Tensor(1, cols, 0.0));
  for (int it = 0; it < iters; ++it) {
    u = ad::sub(lmu, ad::logsumexp_rows(ad::add_row(s_bar, v)));
    v = ad::sub(lnu, ad::logsumexp_cols(ad::add_col(s_bar, u)));
  }
  return ad::add_row(ad::add_col(s_bar, u), v);
}

Eigen::MatrixXd sinkhorn(const Eigen::MatrixXd& s_bar, int iters) {
  Tape t(false);
  const Var lp = log_sinkhorn(t.constant(Tensor::from_matrix(s_bar)), iters);
  return lp.value().to_matrix().array().exp().matrix();
}

Var build_features(const MatchNetConfig& c, const Var& log_p, const MatchInput& in,
                   const std::vector<HeadQuery>& queries) {
  Tape& t = *log_p.tape();
  const std::size_t cols = log_p.cols();
  const std::size_t m = cols - 1;
  if (static_cast<int>(m) > c.max_det) throw ShapeError("build_features: more detections than max_det");
  const Var p_bar = ad::exp(log_p);
  const std::size_t k = queries.size();
  const std::size_t width = static_cast<std::size_t>(c.max_det) + 1;
  std::vector<long> row_idx;
  std::vector<long> var_idx;
  row_idx.reserve(k * width);
  Tensor geo(k, 6);
  const Tensor& pv = p_bar.value();
  for (std::size_t q = 0; q < k; ++q) {
    const HeadQuery& hq = queries[q];
    const std::size_t base = static_cast<std::size_t>(hq.prior) * cols;
    std::vector<long> order(m);
    std::iota(order.begin(), order.end(), 0L);
    std::stable_sort(order.begin(), order.end(),
                     [&](long a, long b) { return pv[base + a] > pv[base + b]; });
    row_idx.push_back(static_cast<long>(base + m));
    for (long j : order) row_idx.push_back(static_cast<long>(base) + j);
    while (row_idx.size() < (q + 1) * width) row_idx.push_back(-1);
    var_idx.push_back(static_cast<long>(base + hq.det));
    const Vec3 vr = hq.range * in.det_bearings[hq.det].u;
    const Vec3& prior = in.prior_positions[hq.prior];
    for (int a = 0; a < 3; ++a) {
      geo(q, a) = vr[a] / c.pos_scale;
      geo(q, 3 + a) = prior[a] / c.pos_scale;
    }
  }
  const Var rows = ad::take(p_bar, row_idx, k, width);
  const Var var = ad::add_scalar(ad::neg(ad::take(p_bar, var_idx, k, 1)), 1.0);
  return ad::concat_cols({t.constant(std::move(geo)), rows, var});
}

std::pair<Var, Var> predict(const ParamVars& p, const MatchNetConfig& c, const Var& feat, const Var& vr_pos) {
  auto mlp = [&](const std::string& h) {
    Var x = ad::relu(linear(p, h + ".w0", h + ".b0", feat));
    x = ad::relu(linear(p, h + ".w1", h + ".b1", x));
    return linear(p, h + ".w2", h + ".b2", x);
  };
  const Var pos = ad::add(vr_pos, ad::scale(mlp("pos"), c.pos_scale));
  const Var logvar = ad::clamp(mlp("cov"), std::log(c.var_min), std::log(c.var_max));
  return {pos, ad::exp(logvar)};
}

BatchOutput forward_batch(Tape& tape, const ParamVars& p, const MatchNetConfig& c,
                          const std::vector<MatchInput>& inputs) {
  BatchOutput out;
  out.observers.resize(inputs.size());

  // Stack [priors_o; detections_o] for every observer with detections.
  std::vector<GnnBlock> blocks;
  std::vector<std::size_t> active;
  std::vector<Bearing> stacked;
  for (std::size_t o = 0; o < inputs.size(); ++o) {
    const MatchInput& in = inputs[o];
    in.validate();
    if (in.m() > c.max_det) throw ShapeError("matchnet: observer has more than max_det detections");
    ObserverOutput& oo = out.observers[o];
    oo.result = unmatched_result(c, in);
    oo.head_row.assign(in.n(), -1);
    if (in.m() == 0) {
      // All priors belong to the dustbin.
      for (int i = 0; i < in.n(); ++i) oo.result.p_bar(i, 0) = 1.0;
      continue;
    }
    GnnBlock b;
    b.prior_begin = stacked.size();
    b.n = in.n();
    stacked.insert(stacked.end(), in.prior_bearings.begin(), in.prior_bearings.end());
    b.det_begin = stacked.size();
    b.m = in.m();
    stacked.insert(stacked.end(), in.det_bearings.begin(), in.det_bearings.end());
    blocks.push_back(b);
    active.push_back(o);
  }
  if (active.empty()) return out;

  const Var emb = encode(p, tape.constant(bearing_rows(stacked)));
  const Var h = gnn_forward_stacked(p, c, emb, blocks);
  const Var& z = param(p, "dustbin");

  std::vector<Var> feats;
  std::vector<std::pair<std::size_t, int>> head_owner;
  std::vector<Vec3> vr_rows;
  for (std::size_t a = 0; a < active.size(); ++a) {
    const std::size_t o = active[a];
    const GnnBlock& b = blocks[a];
    const MatchInput& in = inputs[o];
    ObserverOutput& oo = out.observers[o];
    const Var fp = ad::slice(h, b.prior_begin, b.n, 0, h.cols());
    const Var fd = ad::slice(h, b.det_begin, b.m, 0, h.cols());
    oo.log_p = log_sinkhorn(score(fp, fd, z), c.sinkhorn_iters);
    oo.result.p_bar = oo.log_p.value().to_matrix().array().exp().matrix();
    const Matches mt = extract_matches(oo.result.p_bar, c.threshold);
    std::vector<HeadQuery> queries;
    for (int i = 0; i < in.n(); ++i) {
      const int j = mt.assignment[i];
      if (j < 0) continue;
      oo.result.assignment[i] = j;
      oo.result.prob[i] = mt.prob[i];
      if (!in.uwb_ranges[i]) continue;  // no range: vrPos undefined, stays at the prior
      queries.push_back(HeadQuery{i, j, *in.uwb_ranges[i]});
    }
    if (queries.empty()) continue;
    feats.push_back(build_features(c, oo.log_p, in, queries));
    for (const HeadQuery& q : queries) {
      oo.head_row[q.prior] = static_cast<int>(head_owner.size());
      head_owner.emplace_back(o, q.prior);
      vr_rows.push_back(q.range * in.det_bearings[q.det].u);
    }
  }
  if (feats.empty()) return out;

  Tensor vr(vr_rows.size(), 3);
  for (std::size_t r = 0; r < vr_rows.size(); ++r) {
    for (int k = 0; k < 3; ++k) vr(r, k) = vr_rows[r][k];
  }
  const auto [pos, var] = predict(p, c, ad::concat_rows(feats), tape.constant(std::move(vr)));
  out.pos = pos;
  out.var = var;
  for (std::size_t r = 0; r < head_owner.size(); ++r) {
    const auto [o, i] = head_owner[r];
    MatchResult& res = out.observers[o].result;
    res.refined[i] = true;
    for (int k = 0; k < 3; ++k) {
      res.position[i][k] = pos.value()(r, k);
      res.variance[i][k] = var.value()(r, k);
    }
  }
  return out;
}

std::vector<MatchResult> forward(const NetworkParams& params, const std::vector<MatchInput>& inputs) {
  Tape tape(false);
  const ParamVars p = bind(tape, params);
  BatchOutput b = forward_batch(tape, p, params.config, inputs);
  std::vector<MatchResult> out;
  out.reserve(b.observers.size());
  for (ObserverOutput& o : b.observers) out.push_back(std::move(o.result));
  return out;
}

MatchResult forward(const NetworkParams& params, const MatchInput& input) {
  return std::move(forward(params, std::vector<MatchInput>{input}).front());
}

}  // namespace swarmloc::matchnet
