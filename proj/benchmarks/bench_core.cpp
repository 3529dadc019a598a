#include <random>

#include <benchmark/benchmark.h>

#include "swarmloc/matchnet/network.hpp"
#include "swarmloc/matchnet/observer.hpp"
#include "swarmloc/pgo/frame_graph.hpp"
#include "swarmloc/pgo/solver.hpp"
#include "swarmloc/sim/dataset.hpp"

using namespace swarmloc;

namespace {

sim::Dataset scene(int n) {
  sim::SceneConfig sc;
  sc.n_robots = n;
  sc.n_frames = 20;
  sc.seed = 21;
  if (n > 4) sc.world = Vec3(80, 40, 3);
  return sim::generate_dataset(sc);
}

std::vector<matchnet::MatchInput> inputs(const sim::Dataset& d, int f) {
  const sim::SwarmFrame& fr = d.frames[f];
  std::vector<matchnet::MatchInput> out;
  for (int o = 0; o < d.n_robots(); ++o) {
    std::vector<Pose> priors;
    for (int j = 0; j < d.n_robots(); ++j) priors.push_back(relative(fr.gt[o], fr.gt[j]));
    out.push_back(matchnet::observer_input(o, priors, fr.det[o], matchnet::uwb_row(fr.uwb, o)));
  }
  return out;
}

}  // namespace

static void BM_Sinkhorn(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Eigen::MatrixXd s(n + 1, n + 5);
  for (int i = 0; i < s.size(); ++i) s.data()[i] = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(matchnet::sinkhorn(s, 100));
}
BENCHMARK(BM_Sinkhorn)->Arg(4)->Arg(8)->Arg(16);

static void BM_MatchnetForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const sim::Dataset d = scene(n);
  matchnet::MatchNetConfig mc;
  mc.max_det = d.config.max_det();
  const auto params = matchnet::NetworkParams::init(mc, 1);
  const auto in = inputs(d, 10);
  for (auto _ : state) benchmark::DoNotOptimize(matchnet::forward(params, in));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_MatchnetForward)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_FrameGraphSolve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const sim::Dataset d = scene(n);
  const sim::SwarmFrame& fr = d.frames[10];
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<Pose> priors;
  for (int j = 0; j < n; ++j) {
    const Pose p = relative(fr.gt[0], fr.gt[j]);
    priors.push_back(j == 0 ? p : Pose(p.q(), p.t() + Vec3(g(rng), g(rng), g(rng))));
  }
  const auto in = inputs(d, 10);
  std::vector<matchnet::MatchResult> res;
  matchnet::MatchNetConfig mc;
  mc.max_det = d.config.max_det();
  const auto params = matchnet::NetworkParams::init(mc, 1);
  res = matchnet::forward(params, in);
  std::vector<const matchnet::MatchResult*> ptrs;
  for (const auto& r : res) ptrs.push_back(&r);
  const pgo::FrameGraph fg = pgo::build_frame_graph(0, priors, ptrs, pgo::range_table(fr.uwb), 4.0);
  for (auto _ : state) benchmark::DoNotOptimize(pgo::lm_solve(fg.graph, {}));
}
BENCHMARK(BM_FrameGraphSolve)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
