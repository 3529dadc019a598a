#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "swarmloc/ad/checkpoint.hpp"
#include "swarmloc/ad/tape.hpp"

namespace swarmloc::matchnet {

struct MatchNetConfig {
  int dim = 64;
  int layers = 4;
  /// Maximum detections per observer (M); fixes the head's input width.
  int max_det = 8;
  int head_hidden = 64;
  int sinkhorn_iters = 100;
  double threshold = 0.2;
  double var_min = 1e-4;
  double var_max = 25.0;
  double var_unmatched = 4.0;
  /// Positions are divided by this before entering the heads.
  double pos_scale = 10.0;

  /// 3 (vrPos) + 3 (prior) + (M + 1) (score row) + 1 (Var).
  int feature_width() const { return 3 + 3 + (max_det + 1) + 1; }
  void validate() const;
  bool operator==(const MatchNetConfig&) const = default;
};

/// Trainable weights plus the architecture they belong to.
struct NetworkParams {
  MatchNetConfig config;
  ad::ParamMap tensors;

  /// Seeded initialization. The last layer of the position head is zero, so
  /// an untrained net predicts t = d * b.
  static NetworkParams init(const MatchNetConfig& config, std::uint64_t seed);

  /// Throws ShapeError/ConfigError on missing, misshapen or non-finite tensors.
  void validate() const;

  /// Checkpoint plus a "<path>.meta.json" sidecar with the architecture.
  void save(const std::string& path) const;
  static NetworkParams load(const std::string& path);

  std::uint64_t checksum() const;
};

std::string config_to_json(const MatchNetConfig& c);
MatchNetConfig config_from_json(const std::string& text);

using ParamVars = std::map<std::string, ad::Var>;

/// Registers every tensor as a named tape parameter.
ParamVars bind(ad::Tape& tape, const NetworkParams& params);

/// Expected shape of every tensor, by name.
std::map<std::string, std::pair<std::size_t, std::size_t>> param_shapes(const MatchNetConfig& c);

}  // namespace swarmloc::matchnet
