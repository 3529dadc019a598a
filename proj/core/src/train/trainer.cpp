#include "swarmloc/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"
#include "swarmloc/matchnet/observer.hpp"
#include "swarmloc/pgo/frame_graph.hpp"

namespace swarmloc::train {

using ad::Tensor;
using ad::Var;
using matchnet::prior_slot;

namespace {

std::mt19937_64 sample_rng(std::uint64_t seed, int epoch, int frame) {
  return sim::frame_rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1)), frame);
}

std::vector<int> spread(int first, int last, int cap) {
  std::vector<int> out;
  const int count = last - first;
  if (count <= 0) return out;
  if (cap <= 0 || cap >= count) {
    for (int f = first; f < last; ++f) out.push_back(f);
    return out;
  }
  for (int k = 0; k < cap; ++k) out.push_back(first + static_cast<int>(static_cast<long>(k) * count / cap));
  return out;
}

std::vector<Pose> gt_relative(const sim::SwarmFrame& frame, int reference) {
  std::vector<Pose> rel;
  for (const Pose& p : frame.gt) rel.push_back(relative(frame.gt[reference], p));
  return rel;
}

// Pose loss of the unrolled solve anchored at `k`.
Var reference_pose_loss(ad::Tape& tape, const matchnet::BatchOutput& batch, const matchnet::MatchNetConfig& c,
                        const sim::SwarmFrame& frame, const FrameSample& sample, int k, const TrainConfig& cfg) {
  const int n = frame.n_robots();
  std::vector<const matchnet::MatchResult*> results(n);
  for (int o = 0; o < n; ++o) results[o] = &batch.observers[o].result;
  const pgo::FrameGraph fg =
      pgo::build_frame_graph(k, sample.priors[k], results, pgo::range_table(frame.uwb), c.var_unmatched, cfg.graph);

  auto head_row = [&](int observer, int robot) { return batch.observers[observer].head_row[prior_slot(observer, robot)]; };
  // Rows gathered from the heads where available, graph constants elsewhere.
  auto gather = [&](const std::vector<std::pair<int, int>>& src, auto value, auto info) -> std::pair<Var, Var> {
    if (src.empty()) return {};
    std::vector<long> idx;
    Tensor base_t(src.size(), 3, 0.0);
    Tensor base_v(src.size(), 3, 0.0);
    bool any = false;
    for (std::size_t r = 0; r < src.size(); ++r) {
      const int h = head_row(src[r].first, src[r].second);
      for (int a = 0; a < 3; ++a) idx.push_back(h >= 0 ? static_cast<long>(h * 3 + a) : -1L);
      if (h >= 0) {
        any = true;
        continue;
      }
      const Vec3 v = value(r);
      const Vec3 w = info(r);
      for (int a = 0; a < 3; ++a) {
        base_t(r, a) = v[a];
        base_v(r, a) = 1.0 / w[a];
      }
    }
    if (!any) return {};
    const Var t = ad::add(ad::take(batch.pos, idx, src.size(), 3), tape.constant(std::move(base_t)));
    const Var v = ad::add(ad::take(batch.var, idx, src.size(), 3), tape.constant(std::move(base_v)));
    return {t, ad::div(tape.constant(Tensor(src.size(), 3, 1.0)), v)};
  };
  const auto& g = fg.graph;
  const auto [mm, mi] = gather(
      fg.mutual_src, [&](std::size_t r) { return g.mutual[r].measured; }, [&](std::size_t r) { return g.mutual[r].info; });
  const auto [pt, pi] = gather(
      fg.prior_src, [&](std::size_t r) { return g.prior[r].prior.t(); }, [&](std::size_t r) { return g.prior[r].info_t; });
  const pgo::DiffOutput out = pgo::lm_solve_differentiable(g, cfg.lm, tape, pgo::DiffInputs{mm, mi, pt, pi});
  return loss_pose(out.t, out.q, gt_relative(frame, k), k, cfg.weights.quat);
}

std::string metrics_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "," + m.phase + "," + format_double(m.loss_match) + "," + format_double(m.loss_ml) +
         "," + format_double(m.loss_pose) + "," + format_double(m.total) + "," + format_double(m.val_precision) + "," +
         format_double(m.val_recall) + "," + format_double(m.val_f1) + "," + format_double(m.val_rpe);
}

}  // namespace

void TrainConfig::validate() const {
  optim.validate();
  weights.validate();
  lm.validate();
  if (epochs < 1 || pretrain_epochs < 0 || pretrain_epochs > epochs || pretrain_epochs > 50) {
    throw ConfigError("train: need epochs >= 1 and 0 <= pretrain_epochs <= min(epochs, 50)");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(prior_sigma >= 0.0) || !(prior_rot_sigma >= 0.0)) throw ConfigError("train: prior noise must be >= 0");
  if (checkpoint_every < 0 || val_frames < 0 || max_train_frames < 0) {
    throw ConfigError("train: counts must be >= 0");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("train: val_fraction must be in [0, 1)");
}

int FrameSample::used_count() const { return static_cast<int>(std::count(used.begin(), used.end(), true)); }

FrameSample make_sample(const sim::Dataset& data, int frame, double prior_sigma, std::mt19937_64& rng,
                        double prior_rot_sigma) {
  if (frame < 1 || frame >= data.n_frames()) throw ShapeError("make_sample: frame must be in [1, n_frames)");
  const sim::SwarmFrame& prev = data.frames[frame - 1];
  const sim::SwarmFrame& cur = data.frames[frame];
  const int n = cur.n_robots();
  std::normal_distribution<double> noise(0.0, 1.0);
  FrameSample s;
  s.frame = frame;
  s.priors.resize(n);
  for (int o = 0; o < n; ++o) {
    Quat drift = Quat::Identity();
    if (prior_rot_sigma > 0.0) {
      const Vec3 w(noise(rng), noise(rng), noise(rng));
      drift = exp_so3(prior_rot_sigma * w);
    }
    for (int j = 0; j < n; ++j) {
      Pose rel = relative(prev.gt[o], prev.gt[j]);
      if (j != o) {
        const Vec3 e(noise(rng), noise(rng), noise(rng));
        rel = Pose(drift * rel.q(), drift * rel.t() + prior_sigma * e);
      } else {
        rel = Pose::identity();
      }
      s.priors[o].push_back(rel);
    }
    const auto ranges = matchnet::uwb_row(cur.uwb, o);
    s.inputs.push_back(matchnet::observer_input(o, s.priors[o], cur.det[o], ranges));
    s.gt.push_back(matchnet::gt_assignment(cur, o));
    const bool has_range = std::any_of(ranges.begin(), ranges.end(), [](const auto& r) { return r.has_value(); });
    s.used.push_back(!cur.det[o].empty() && has_range);
  }
  return s;
}

FrameLoss frame_loss(ad::Tape& tape, const matchnet::ParamVars& p, const matchnet::MatchNetConfig& c,
                     const sim::SwarmFrame& frame, const FrameSample& sample, const TrainConfig& config,
                     bool with_pose) {
  const int n = frame.n_robots();
  const matchnet::BatchOutput batch = matchnet::forward_batch(tape, p, c, sample.inputs);
  FrameLoss out;
  std::vector<Var> match_terms;
  for (int o = 0; o < n; ++o) {
    if (!sample.used[o] || !batch.observers[o].log_p.valid()) continue;
    match_terms.push_back(loss_match(batch.observers[o].log_p, sample.gt[o]));
  }
  Var total = tape.constant(Tensor(1, 1, 0.0));
  for (const Var& m : match_terms) total = ad::add(total, m);
  out.match = total.item();

  if (batch.pos.valid()) {
    Tensor gt(batch.pos.rows(), 3);
    for (int o = 0; o < n; ++o) {
      const auto& hr = batch.observers[o].head_row;
      for (std::size_t s = 0; s < hr.size(); ++s) {
        if (hr[s] < 0) continue;
        const int j = matchnet::other_robot(o, static_cast<int>(s));
        const Vec3 t = frame.gt[o].q().conjugate() * (frame.gt[j].t() - frame.gt[o].t());
        for (int a = 0; a < 3; ++a) gt(hr[s], a) = t[a];
      }
    }
    const Var ml = loss_ml(batch.pos, batch.var, gt, config.weights.det, n);
    out.ml = ml.item();
    total = ad::add(total, ad::scale(ml, config.weights.ml));
  }

  if (with_pose && config.weights.pose > 0.0) {
    Var pose = tape.constant(Tensor(1, 1, 0.0));
    for (int k = 0; k < n; ++k) pose = ad::add(pose, reference_pose_loss(tape, batch, c, frame, sample, k, config));
    out.pose = pose.item();
    total = ad::add(total, ad::scale(pose, config.weights.pose));
  }
  out.total = total;
  return out;
}

Validation validate_frames(const matchnet::NetworkParams& params, const sim::Dataset& data,
                           const std::vector<int>& frames, const TrainConfig& config) {
  Validation v;
  eval::RpeAccumulator rpe(data.n_robots());
  for (int f : frames) {
    std::mt19937_64 rng = sample_rng(config.seed, -1, f);
    const FrameSample s = make_sample(data, f, config.prior_sigma, rng, config.prior_rot_sigma);
    const auto results = matchnet::forward(params, s.inputs);
    const int n = data.n_robots();
    std::vector<const matchnet::MatchResult*> ptrs;
    for (int o = 0; o < n; ++o) {
      v.matching.add(results[o].assignment, s.gt[o]);
      ptrs.push_back(&results[o]);
    }
    const sim::SwarmFrame& frame = data.frames[f];
    const pgo::FrameGraph fg = pgo::build_frame_graph(0, s.priors[0], ptrs, pgo::range_table(frame.uwb),
                                                      params.config.var_unmatched, config.graph);
    const pgo::SolveResult sol = pgo::lm_solve(fg.graph, config.lm);
    rpe.add(eval::relative_positions(sol.poses), eval::relative_positions(frame.gt));
  }
  v.rpe = rpe.rmse();
  return v;
}

TrainStats train(matchnet::NetworkParams& params, const sim::Dataset& train_set, const sim::Dataset* val_set,
                 const TrainConfig& config, std::ostream* log) {
  config.validate();
  params.validate();
  const matchnet::MatchNetConfig& c = params.config;
  if (train_set.n_frames() < 2) throw ShapeError("train: dataset needs at least two frames");
  if (train_set.config.max_det() > c.max_det) {
    throw ShapeError("train: dataset allows " + std::to_string(train_set.config.max_det()) +
                     " detections per robot but the network was built for max_det = " + std::to_string(c.max_det));
  }
  if (val_set && (val_set->config.max_det() > c.max_det || val_set->n_frames() < 2)) {
    throw ShapeError("train: validation set does not fit the network");
  }

  int train_end = train_set.n_frames();
  std::vector<int> val_frames;
  const sim::Dataset& val_data = val_set ? *val_set : train_set;
  if (val_set) {
    val_frames = spread(1, val_set->n_frames(), config.val_frames);
  } else {
    const int held = static_cast<int>(std::floor(config.val_fraction * train_set.n_frames()));
    if (held > 0 && train_end - held >= 2) {
      val_frames = spread(train_end - held, train_end, config.val_frames);
      train_end -= held;
    }
  }
  const std::vector<int> train_frames = spread(1, train_end, config.max_train_frames);

  std::filesystem::path out_dir;
  std::ofstream metrics;
  if (!config.out_dir.empty()) {
    out_dir = config.out_dir;
    std::filesystem::create_directories(out_dir);
    metrics.open(out_dir / "metrics.csv");
    if (!metrics) throw Error("train: cannot write " + (out_dir / "metrics.csv").string());
    metrics << kMetricsHeader << "\n";
  }

  AdamW opt(config.optim);
  TrainStats stats;
  double best_rpe = INFINITY;
  const int n = train_set.n_robots();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const bool e2e = epoch > config.pretrain_epochs;
    std::vector<int> order = train_frames;
    std::mt19937_64 shuffle_rng = sample_rng(config.seed, epoch, -1);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics em;
    em.epoch = epoch;
    em.phase = e2e ? "e2e" : "pretrain";
    long counted = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(config.batch_size));
      ad::ParamMap acc;
      int used_frames = 0;
      for (std::size_t b = b0; b < b1; ++b) {
        const int f = order[b];
        std::mt19937_64 rng = sample_rng(config.seed, epoch, f);
        const FrameSample sample = make_sample(train_set, f, config.prior_sigma, rng, config.prior_rot_sigma);
        stats.instances_used += sample.used_count();
        stats.instances_skipped += n - sample.used_count();
        if (sample.used_count() == 0) {
          ++stats.frames_skipped;
          continue;
        }
        ad::Tape tape;
        const matchnet::ParamVars p = matchnet::bind(tape, params);
        const FrameLoss fl = frame_loss(tape, p, c, train_set.frames[f], sample, config, e2e);
        const ad::Gradients g = tape.backward(fl.total);
        for (const auto& [name, grad] : g.params) {
          auto [it, fresh] = acc.try_emplace(name, grad);
          if (!fresh) {
            for (std::size_t k = 0; k < grad.size(); ++k) it->second[k] += grad[k];
          }
        }
        ++used_frames;
        ++counted;
        em.loss_match += fl.match;
        em.loss_ml += fl.ml;
        em.loss_pose += fl.pose;
        em.total += fl.total.item();
      }
      if (used_frames == 0) continue;
      for (auto& [name, grad] : acc) {
        for (double& v : grad.data()) v /= used_frames;
      }
      opt.step(params.tensors, acc);
      ++stats.steps;
    }
    if (counted > 0) {
      em.loss_match /= counted;
      em.loss_ml /= counted;
      em.loss_pose /= counted;
      em.total /= counted;
    }
    if (!val_frames.empty()) {
      const Validation v = validate_frames(params, val_data, val_frames, config);
      em.val_precision = v.matching.precision();
      em.val_recall = v.matching.recall();
      em.val_f1 = v.matching.f1();
      em.val_rpe = v.rpe;
    }
    stats.history.push_back(em);
    if (log) *log << metrics_row(em) << std::endl;
    if (metrics.is_open()) metrics << metrics_row(em) << "\n" << std::flush;
    const bool best = val_frames.empty() || em.val_rpe < best_rpe;
    if (best) {
      best_rpe = em.val_rpe;
      stats.best_epoch = epoch;
    }
    if (!out_dir.empty()) {
      if (best) params.save((out_dir / "best.ckpt").string());
      if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
        params.save((out_dir / ("epoch_" + std::to_string(epoch) + ".ckpt")).string());
      }
    }
  }
  if (!out_dir.empty()) params.save((out_dir / "final.ckpt").string());
  return stats;
}

}  // namespace swarmloc::train
