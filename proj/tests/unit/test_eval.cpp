#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "swarmloc/error.hpp"
#include "swarmloc/eval/pipeline.hpp"
#include "swarmloc/matchnet/observer.hpp"
#include "test_util.hpp"

using namespace swarmloc;
using namespace swarmloc::eval;

namespace {

sim::Dataset dataset(int n, int frames, std::uint64_t seed, bool noiseless) {
  sim::SceneConfig sc;
  sc.n_robots = n;
  sc.n_frames = frames;
  sc.seed = seed;
  if (noiseless) sc = sc.noiseless();
  return sim::generate_dataset(sc);
}

matchnet::MatchInput input_from(const std::vector<Vec3>& priors, const std::vector<Vec3>& dets,
                                const std::vector<std::optional<double>>& ranges) {
  std::vector<Bearing> b;
  for (const Vec3& d : dets) b.push_back(Bearing::from_vector(d));
  return matchnet::MatchInput::from_priors(priors, b, ranges);
}

}  // namespace

TEST(Prf1, CountsAndScores) {
  PRF1 s;
  s.add({1, -1, 2, 3}, {1, 0, -1, 2});
  EXPECT_EQ(s.tp, 1);
  EXPECT_EQ(s.fp, 2);  // 2 for an unobserved prior, 3 instead of 2
  EXPECT_EQ(s.fn, 2);  // 0 missed, 2 missed
  EXPECT_DOUBLE_EQ(s.precision(), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.recall(), 1.0 / 3.0);
  PRF1 none;
  none.add({-1, -1}, {0, -1});
  EXPECT_EQ(none.precision(), 0.0);
  EXPECT_EQ(none.f1(), 0.0);
  EXPECT_EQ(none.fn, 1);
  EXPECT_THROW(none.add({0}, {0, 1}), ShapeError);
}

TEST(Prf1, F1IsHarmonicMean) {
  EXPECT_NEAR(f1_score(0.9747, 0.9951), 0.985, 5e-4);
  EXPECT_EQ(f1_score(0.0, 0.0), 0.0);
  const PRF1 agg = match_prf1({{0, 1}, {-1}}, {{0, 1}, {0}});
  EXPECT_EQ(agg.tp, 2);
  EXPECT_EQ(agg.fn, 1);
  EXPECT_NEAR(agg.f1(), f1_score(1.0, 2.0 / 3.0), 1e-15);
}

TEST(Rpe, SingleOffsetExample) {
  const std::vector<Pose> gt{Pose::identity(), Pose::from_translation(Vec3(3, 0, 0))};
  std::vector<Pose> est = gt;
  est[1] = Pose::from_translation(Vec3(4, 0, 0));
  RpeAccumulator acc(2);
  acc.add(relative_positions(est), relative_positions(gt));
  // Both directions are off by 1 m.
  EXPECT_NEAR(acc.rmse(), 1.0, 1e-15);
  EXPECT_EQ(acc.count(), 2);
  EXPECT_NEAR(acc.take_window(), 1.0, 1e-15);
  EXPECT_EQ(acc.take_window(), 0.0);
}

TEST(Rpe, MatchesBruteForceInLocalFrames) {
  std::mt19937_64 rng(6);
  const int n = 5;
  RpeAccumulator acc(n);
  double sum = 0.0;
  long count = 0;
  for (int f = 0; f < 20; ++f) {
    std::vector<Pose> gt;
    std::vector<Pose> est;
    for (int i = 0; i < n; ++i) {
      gt.push_back(test::random_pose(rng, 5.0));
      est.push_back(compose(gt.back(), test::random_pose(rng, 0.2)));
    }
    acc.add(relative_positions(est), relative_positions(gt));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const Eigen::Matrix3d ri = est[i].q().toRotationMatrix();
        const Eigen::Matrix3d gi = gt[i].q().toRotationMatrix();
        const Vec3 e = ri.transpose() * (est[j].t() - est[i].t()) - gi.transpose() * (gt[j].t() - gt[i].t());
        sum += e.squaredNorm();
        ++count;
      }
    }
  }
  EXPECT_NEAR(acc.rmse(), std::sqrt(sum / count), 1e-12);
  const Eigen::MatrixXd pairs = acc.pair_rmse();
  EXPECT_EQ(pairs(2, 2), 0.0);
  EXPECT_GT(pairs(0, 1), 0.0);
}

TEST(Rpe, RowRestrictsObserver) {
  const std::vector<Pose> gt{Pose::identity(), Pose::from_translation(Vec3(3, 0, 0)),
                             Pose::from_translation(Vec3(0, 3, 0))};
  std::vector<Pose> est = gt;
  est[2] = Pose::from_translation(Vec3(0, 5, 0));
  RpeAccumulator acc(3);
  acc.add_row(1, relative_positions(est), relative_positions(gt));
  EXPECT_EQ(acc.count(), 2);
  EXPECT_NEAR(acc.rmse(), std::sqrt(4.0 / 2.0), 1e-12);
}

TEST(SimpleMatch, ExactBearingsGiveRangeScaledPositions) {
  const auto in = input_from({Vec3(4, 1, 0), Vec3(1, -5, 0)}, {Vec3(1, -5, 0), Vec3(0, 0, 3), Vec3(4, 1, 0)},
                             {std::sqrt(17.0), std::sqrt(26.0)});
  const auto r = simple_match(in, {});
  EXPECT_EQ(r.assignment, (std::vector<int>{2, 0}));
  EXPECT_NEAR(r.prob[0], 1.0, 1e-12);
  EXPECT_LT((r.position[0] - Vec3(4, 1, 0)).norm(), 1e-12);
  EXPECT_LT((r.variance[1] - Vec3::Constant(0.04)).norm(), 1e-12);
  EXPECT_TRUE(r.refined[0]);
}

TEST(SimpleMatch, ThresholdNoRangeAndVariance) {
  SimpleMatchConfig c;
  c.cos_threshold = 0.9;
  // 20 degrees apart: cos ~ 0.94.
  const double a = 20.0 * 3.14159265358979323846 / 180.0;
  const auto in = input_from({Vec3(1, 0, 0), Vec3(0, 1, 0)}, {Vec3(std::cos(a), std::sin(a), 0)},
                             {2.0, std::nullopt});
  const auto r = simple_match(in, c);
  EXPECT_EQ(r.assignment, (std::vector<int>{0, -1}));
  EXPECT_NEAR(r.variance[0][0], 0.04 * (1.0 + 100.0 * (1.0 - std::cos(a))), 1e-12);
  EXPECT_EQ(simple_match(in, {}).assignment, (std::vector<int>{-1, -1}));

  const auto no_range = input_from({Vec3(1, 0, 0)}, {Vec3(1, 0, 0)}, {std::nullopt});
  const auto nr = simple_match(no_range, {});
  EXPECT_EQ(nr.assignment[0], 0);
  EXPECT_FALSE(nr.refined[0]);
  EXPECT_EQ(nr.variance[0], Vec3::Constant(4.0));
  EXPECT_EQ(nr.position[0], Vec3(1, 0, 0));
}

TEST(SimpleMatch, GreedyAndNonInjective) {
  // Both priors are closest to detection 0; prior 1 is closer.
  const auto in = input_from({Vec3(1, 0.01, 0), Vec3(1, 0.001, 0)}, {Vec3(1, 0, 0), Vec3(1, 0.05, 0)}, {1.0, 1.0});
  SimpleMatchConfig c;
  c.cos_threshold = 0.9;
  EXPECT_EQ(simple_match(in, c).assignment, (std::vector<int>{1, 0}));
  c.injective = false;
  EXPECT_EQ(simple_match(in, c).assignment, (std::vector<int>{0, 0}));
}

TEST(Pipeline, MethodNames) {
  for (const char* m : {"pvo", "simple", "simple+pgo", "learned", "learned+pgo"}) {
    EXPECT_EQ(method_name(parse_method(m)), m);
  }
  EXPECT_THROW(parse_method("magic"), ConfigError);
  EXPECT_TRUE(uses_pgo(Method::kPvo));
  EXPECT_FALSE(uses_pgo(Method::kLearned));
  EXPECT_TRUE(uses_network(Method::kLearnedPgo));
}

TEST(Pipeline, ZeroNoiseBaselinesAreExact) {
  const sim::Dataset d = dataset(4, 150, 5, true);
  const EvalReport pvo = run_pipeline(d, Method::kPvo, nullptr, {});
  EXPECT_LT(pvo.rpe_rmse, 1e-9);
  EXPECT_EQ(pvo.n_frames, 150);
  EXPECT_EQ(pvo.matching.tp + pvo.matching.fp, 0);
  for (Method m : {Method::kSimple, Method::kSimplePgo}) {
    const EvalReport r = run_pipeline(d, m, nullptr, {});
    EXPECT_LT(r.rpe_rmse, 1e-6) << r.method;
    EXPECT_GT(r.matching.tp, 0);
    EXPECT_EQ(r.matching.precision(), 1.0);
    EXPECT_EQ(r.matching.recall(), 1.0);
  }
}

TEST(Pipeline, PvoDriftGrowsOverWindows) {
  const sim::Dataset d = dataset(4, 600, 9, false);
  const EvalReport r = run_pipeline(d, Method::kPvo, nullptr, {});
  // Least-squares slope of the windowed RMSE.
  std::vector<double> w;
  for (int k = 0; k < 6; ++k) {
    double s = 0.0;
    for (int f = k * 100; f < (k + 1) * 100; ++f) s += r.frames[f].rpe * r.frames[f].rpe;
    w.push_back(std::sqrt(s / 100.0));
  }
  double num = 0.0;
  double den = 0.0;
  for (int k = 0; k < 6; ++k) {
    num += (k - 2.5) * w[k];
    den += (k - 2.5) * (k - 2.5);
  }
  EXPECT_GT(num / den, 0.0);
  EXPECT_GT(w.back(), w.front());
}

TEST(Pipeline, PgoImprovesSimpleMatch) {
  const sim::Dataset d = dataset(4, 200, 9, false);
  const double simple = run_pipeline(d, Method::kSimple, nullptr, {}).rpe_rmse;
  const double pgo = run_pipeline(d, Method::kSimplePgo, nullptr, {}).rpe_rmse;
  EXPECT_LT(pgo, simple);
}

TEST(Pipeline, DeterministicAndWindowed) {
  const sim::Dataset d = dataset(3, 80, 2, false);
  EvalConfig c;
  c.first_frame = 10;
  c.max_frames = 30;
  const EvalReport a = run_pipeline(d, Method::kSimplePgo, nullptr, c);
  const EvalReport b = run_pipeline(d, Method::kSimplePgo, nullptr, c);
  EXPECT_EQ(report_to_json(a, true), report_to_json(b, true));
  EXPECT_EQ(a.n_frames, 30);
  EXPECT_EQ(a.frames.front().frame, 10);
  EXPECT_LT(a.frames.front().rpe, 1.0);
  c.first_frame = 80;
  EXPECT_THROW(run_pipeline(d, Method::kPvo, nullptr, c), ConfigError);
}

TEST(Pipeline, LearnedNeedsCompatibleParams) {
  const sim::Dataset d = dataset(4, 10, 2, false);
  EXPECT_THROW(run_pipeline(d, Method::kLearned, nullptr, {}), ConfigError);
  matchnet::MatchNetConfig mc;
  mc.dim = 8;
  mc.layers = 1;
  mc.max_det = 4;
  const auto p = matchnet::NetworkParams::init(mc, 1);
  EXPECT_THROW(run_pipeline(d, Method::kLearnedPgo, &p, {}), ShapeError);
}

TEST(Pipeline, ReportFiles) {
  const sim::Dataset d = dataset(3, 20, 2, false);
  const EvalReport r = run_pipeline(d, Method::kSimplePgo, nullptr, {});
  const std::string prefix = test::tmp_path("report");
  write_report(r, prefix);
  std::ifstream js(prefix + ".json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j.at("method"), "simple+pgo");
  EXPECT_EQ(j.at("pair_rpe").size(), 3u);
  EXPECT_NEAR(j.at("rpe_rmse").get<double>(), r.rpe_rmse, 1e-15);
  EXPECT_TRUE(j.at("matching").contains("f1"));
  std::ifstream frames(prefix + "_frames.csv");
  std::string header;
  std::getline(frames, header);
  EXPECT_EQ(header, "frame,rpe,rot_err,tp,fp,fn,matched,solver_iterations");
  int lines = 0;
  for (std::string l; std::getline(frames, l);) ++lines;
  EXPECT_EQ(lines, 20);
  std::ifstream pairs(prefix + "_pairs.csv");
  lines = 0;
  for (std::string l; std::getline(pairs, l);) ++lines;
  EXPECT_EQ(lines, 1 + 6);
}
