#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "swarmloc/eval/metrics.hpp"
#include "swarmloc/eval/simple_match.hpp"
#include "swarmloc/matchnet/params.hpp"
#include "swarmloc/pgo/solver.hpp"
#include "swarmloc/sim/dataset.hpp"

namespace swarmloc::eval {

enum class Method { kPvo, kSimple, kSimplePgo, kLearned, kLearnedPgo };

std::string method_name(Method m);
/// Accepts "pvo", "simple", "simple+pgo", "learned", "learned+pgo".
Method parse_method(const std::string& name);
bool uses_network(Method m);
bool uses_pgo(Method m);

struct EvalConfig {
  SimpleMatchConfig simple;
  pgo::LMSettings lm;
  pgo::GraphDefaults graph;
  /// Evaluate frames [first_frame, first_frame + max_frames); 0 = to the end.
  int first_frame = 0;
  int max_frames = 0;
  /// Record every robot's estimated position in robot 0's frame per frame.
  bool keep_positions = false;

  void validate() const;
};

struct FrameDiagnostics {
  int frame = 0;
  double rpe = 0.0;
  /// RMS relative rotation error over ordered pairs, radians.
  double rot_err = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
  int matched = 0;
  int solver_iterations = 0;
};

struct EvalReport {
  std::string method;
  int n_robots = 0;
  int n_frames = 0;
  double rpe_rmse = 0.0;
  Eigen::MatrixXd pair_rpe;
  /// Matching scores; counts stay zero for pvo.
  PRF1 matching;
  std::vector<FrameDiagnostics> frames;
  /// positions[frame][j], only with EvalConfig::keep_positions.
  std::vector<std::vector<Vec3>> positions;
};

/// Sequential inference over the dataset. Robot states start at the ground
/// truth of the first evaluated frame and are propagated every frame by the
/// PVO increments, then corrected by the method's front end (and PGO with
/// robot 0 as reference for +pgo methods). `params` is required for learned
/// methods.
EvalReport run_pipeline(const sim::Dataset& data, Method method, const matchnet::NetworkParams* params,
                        const EvalConfig& config);

std::string report_to_json(const EvalReport& r, bool include_frames = false);
/// <prefix>.json plus <prefix>_frames.csv and <prefix>_pairs.csv.
void write_report(const EvalReport& r, const std::string& prefix);

}  // namespace swarmloc::eval
